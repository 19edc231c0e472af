#!/usr/bin/env python3
"""
    cli.py
    ~~~~~~

    Command line entry point. Each subcommand runs one stage of the pipeline
    (image enhancement, registration, mask rendering, colorization), the
    whole pipeline (fuse), or the synthetic scene harness (synth, eval).

    Every subcommand writes its outputs to a single run folder together with
    a manifest.json listing the sha256 of each output file, the wall time of
    each stage and the run timestamp.

    Parameters come from the built-in defaults, overridden by config.ini (or
    the file given by --config), overridden by command line flags.
"""

import argparse
import json
from datetime import datetime, timezone
import glob
import logging
import os
import sys
import time
import traceback

import numpy as np
import pandas as pd

import scancolor.utils as utils
from scancolor.config import COARSE_MODES
from scancolor.factories import format_factory, run_config_factory
from scancolor.formats.Bundler import Bundler
from scancolor.formats.Correspondences import Correspondences
from scancolor.formats.ImageFile import ImageFile
from scancolor.formats.PLY import PLY
from scancolor.formats.Transform import Transform
from scancolor.geometry import SimilarityTransform, TriangleMesh
from scancolor.imageproc import equalize_value_channel
from scancolor.projection import quality_masks, transform_camera
from scancolor.registration import (
    coarse_align_bbox,
    coarse_align_correspondences,
    sicp_register,
)
from scancolor.colorize import (
    ImageView,
    colorize_cloud,
    displacements_to_dataframe,
    extract_patch,
    records_from_dataframe,
)
from scancolor import synthetic

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2

INPUT_ERRORS = (
    utils.SetupError,
    utils.DataReadingError,
    utils.DataSavingError,
    utils.DataParseError,
    utils.UnsupportedFormatError,
    utils.InsufficientCorrespondencesError,
    utils.GeometryError,
    utils.EvaluationError,
)
NUMERICAL_ERRORS = (
    utils.DegenerateGeometryError,
    utils.RegistrationError,
    utils.ColorizationError,
    utils.DimensionMismatchError,
)

IMAGE_EXTENSIONS = (".png", ".ppm")
COLORED_FN = "colored.ply"
REPORT_FN = "report.json"
DISPLACEMENTS_FN = "displacements.csv"
TRANSFORM_FN = "transform.txt"
TRACE_FN = "rmse_trace.csv"
SCORE_FN = "score.json"
MASKS_DIR = "masks"
ENHANCED_DIR = "enhanced"
MASK_LAYERS = ("depth", "angle", "depth_weight", "border", "combined")

# CLI flag dest -> RunConfig key
OVERRIDES = {
    "scan": "scan",
    "bundler": "bundler",
    "images": "images",
    "output": "output",
    "correspondences": "correspondences",
    "transform": "transform",
    "coarse": "coarse",
    "sicp_tol": "sicp_tolerance",
    "sicp_max_iter": "sicp_max_iterations",
    "reject_sigma": "reject_sigma",
    "visibility_eps": "visibility_epsilon",
    "block_size": "block_size",
    "search_radius": "search_radius",
    "best_k": "best_k",
    "preset": "preset",
    "kind": "kind",
    "vertices": "vertices",
    "n_images": "n_images",
    "width": "width",
    "height": "height",
    "seed": "seed",
}


class RunRecorder:
    """
    Collects the files and stage timings of one run for its manifest.
    """

    def __init__(self, folder, command):
        self.folder = folder
        self.command = command
        self.files = []
        self.timings = {}
        utils.ensure_folder(folder)

    def path(self, name):
        """
        Registers an output file and returns its full path.
        """
        full = os.path.join(self.folder, name)
        utils.ensure_folder(os.path.dirname(full))
        if name not in self.files:
            self.files.append(name)
        return full

    def stage(self, name, started):
        self.timings[name] = time.perf_counter() - started

    def write_manifest(self):
        manifest = {
            "command": self.command,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "timings": self.timings,
            "files": {
                name: utils.file_hash(os.path.join(self.folder, name))
                for name in sorted(self.files)
            },
        }
        utils.save_json_file(manifest, os.path.join(self.folder, utils.MANIFEST_FN), True)
        logging.info("Wrote manifest for {} files to {}".format(len(self.files), self.folder))


def add_common_args(parser):
    parser.add_argument("--config", metavar="FILE", help="INI file with run parameters.")
    parser.add_argument("--output", metavar="DIR", help="Run folder for all outputs.")
    parser.add_argument("--log", metavar="FILE", help="Also write the log to this file.")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")


def add_input_args(parser, scan=True, bundler=True, images=True):
    if scan:
        parser.add_argument("--scan", metavar="PLY", help="Scanned geometry, PLY mesh or cloud.")
    if bundler:
        parser.add_argument("--bundler", metavar="OUT", help="Bundler v0.3 reconstruction.")
    if images:
        parser.add_argument(
            "--images",
            metavar="DIR",
            help="Folder of photographs, matched to cameras in sorted filename order.",
        )


def add_registration_args(parser):
    parser.add_argument(
        "--coarse",
        choices=COARSE_MODES,
        help="Initial alignment: bounding boxes, picked correspondences or a transform file.",
    )
    parser.add_argument("--correspondences", metavar="FILE", help="Picked point pairs.")
    parser.add_argument(
        "--initial-transform",
        dest="initial_transform",
        metavar="FILE",
        help="Starting transform for --coarse file.",
    )
    parser.add_argument("--sicp-tol", type=float, help="Relative RMSE change to stop at.")
    parser.add_argument("--sicp-max-iter", type=int, help="SICP iteration cap.")
    parser.add_argument(
        "--reject-sigma", type=float, help="Drop pairs beyond median + k sigma of distances."
    )


def add_projection_args(parser):
    parser.add_argument(
        "--visibility-eps", type=float, help="Depth test tolerance in scan units."
    )


def add_colorize_args(parser):
    parser.add_argument("--block-size", type=int, help="Odd block side in pixels.")
    parser.add_argument("--search-radius", type=int, help="Displacement search radius W.")
    parser.add_argument("--best-k", type=int, help="Images blended per point.")
    parser.add_argument(
        "--no-correction",
        action="store_true",
        help="Blend at the original projections, without block matching.",
    )
    parser.add_argument(
        "--patch-center",
        nargs=3,
        type=float,
        metavar=("X", "Y", "Z"),
        help="Only color the points nearest this scan-frame position.",
    )
    parser.add_argument(
        "--patch-size", type=int, default=5000, help="Number of points in the patch."
    )


def parse_args(argv=None):
    """
    Parses CLI arguments.

    Args:
        - argv (list, optional): Arguments, defaults to sys.argv[1:].

    Returns:
        An argparse.Namespace object.
    """
    parser = argparse.ArgumentParser(
        prog="scancolor", description="Color 3D scans from registered photographs"
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    enhance = subparsers.add_parser("enhance", help="Equalize the brightness of photographs.")
    add_common_args(enhance)
    add_input_args(enhance, scan=False, bundler=False)

    register = subparsers.add_parser(
        "register", help="Align the SfM cloud with the scan; writes the transform."
    )
    add_common_args(register)
    add_input_args(register)
    add_registration_args(register)

    masks = subparsers.add_parser("masks", help="Render quality masks for each camera.")
    add_common_args(masks)
    add_input_args(masks)
    add_projection_args(masks)
    masks.add_argument("--transform", metavar="FILE", help="SfM to scan transform.")

    colorize = subparsers.add_parser("colorize", help="Color the scan from the photographs.")
    add_common_args(colorize)
    add_input_args(colorize)
    add_projection_args(colorize)
    add_colorize_args(colorize)
    colorize.add_argument("--transform", metavar="FILE", help="SfM to scan transform.")

    fuse = subparsers.add_parser("fuse", help="Register, then colorize.")
    add_common_args(fuse)
    add_input_args(fuse)
    add_registration_args(fuse)
    add_projection_args(fuse)
    add_colorize_args(fuse)

    synth = subparsers.add_parser("synth", help="Generate a synthetic scene.")
    add_common_args(synth)
    synth.add_argument("--seed", type=int, help="RNG seed.")
    synth.add_argument("--preset", choices=sorted(synthetic.PRESETS), help="Scene preset.")
    synth.add_argument("--kind", choices=synthetic.KINDS, help="Scene geometry.")
    synth.add_argument("--vertices", type=int, help="Approximate vertex count.")
    synth.add_argument("--n-images", type=int, help="Number of cameras.")
    synth.add_argument("--width", type=int, help="Image width.")
    synth.add_argument("--height", type=int, help="Image height.")
    synth.add_argument("--arc", type=float, help="Degrees of the camera ring in use.")
    synth.add_argument("--elevation", type=float, help="Camera elevation in degrees.")
    synth.add_argument(
        "--renderer", choices=("raster", "raycast"), help="Image renderer."
    )
    synth.add_argument(
        "--shift",
        nargs=2,
        type=float,
        metavar=("DX", "DY"),
        help="Shift the principal point of --perturb-camera by (DX, DY) px.",
    )
    synth.add_argument(
        "--camera-rotation", type=float, metavar="MRAD", help="Rotate --perturb-camera."
    )
    synth.add_argument(
        "--similarity", type=float, metavar="S", help="Re-express the SfM cloud with scale S."
    )
    synth.add_argument(
        "--point-noise",
        type=float,
        metavar="SIGMA",
        help="Gaussian SfM point noise, as a fraction of the bounding box diagonal.",
    )
    synth.add_argument("--perturb-camera", type=int, default=0, help="Camera to perturb.")

    evaluate = subparsers.add_parser("eval", help="Score a run against a synthetic scene.")
    add_common_args(evaluate)
    evaluate.add_argument("--scene", metavar="DIR", required=True, help="Folder from synth.")
    evaluate.add_argument("--run", metavar="DIR", required=True, help="Folder from fuse/colorize.")
    evaluate.add_argument(
        "--strict", action="store_true", help="Exit with code 2 unless every check passes."
    )

    return parser.parse_args(argv)


def load_run_config(args):
    """
    Merges built-in defaults, the config file and CLI flags.

    Args:
        - args (argparse.Namespace): Parsed arguments.

    Returns:
        A RunConfig.
    """
    cfg = run_config_factory(utils.setup_config(args.config))
    overrides = {
        key: getattr(args, dest) for dest, key in OVERRIDES.items() if hasattr(args, dest)
    }
    if getattr(args, "no_correction", False):
        overrides["local_correction"] = False
    if getattr(args, "initial_transform", None) is not None:
        overrides["transform"] = args.initial_transform
    return cfg.with_overrides(**overrides)


def require(value, flag):
    if value is None:
        raise utils.SetupError(
            "No {} given, set it in the config file or pass {}.".format(flag.lstrip("-"), flag)
        )
    return value


def list_images(folder):
    """
    Photograph filenames in a folder, sorted.
    """
    if not os.path.isdir(folder):
        raise utils.DataReadingError("Image folder {} doesn't exist".format(folder))
    fns = sorted(
        fn
        for fn in glob.glob(os.path.join(folder, "*"))
        if os.path.splitext(fn)[1].lower() in IMAGE_EXTENSIONS
    )
    if len(fns) == 0:
        raise utils.DataReadingError("No images found in {}".format(folder))
    return fns


def load_images(folder):
    fns = list_images(folder)
    images = [format_factory(fn).read_file(fn) for fn in fns]
    logging.info("Loaded {} images from {}".format(len(images), folder))
    return fns, images


def load_scan(filename):
    scan = format_factory(filename).read_file(filename)
    logging.info("Loaded scan {} with {} points".format(filename, len(scan.points)))
    return scan


def load_reconstruction(filename, images):
    recon = Bundler([(img.width, img.height) for img in images]).read_file(filename)
    if len(recon.cameras) != len(images):
        raise utils.SetupError(
            "Reconstruction has {} cameras but {} images were found.".format(
                len(recon.cameras), len(images)
            )
        )
    return recon


def load_transform(filename):
    if filename is None:
        logging.info("No transform given, cameras are taken to be in the scan frame")
        return SimilarityTransform.identity()
    return Transform().read_file(filename)


def run_enhance(cfg, recorder):
    """
    Writes a brightness-equalized copy of every photograph.
    """
    started = time.perf_counter()
    fns, images = load_images(require(cfg.images, "--images"))
    for fn, image in zip(fns, images):
        name = os.path.join(ENHANCED_DIR, os.path.splitext(os.path.basename(fn))[0] + ".png")
        ImageFile().save_file(equalize_value_channel(image), recorder.path(name), True)
    recorder.stage("enhance", started)


def run_register(cfg, recorder, source, target):
    """
    Coarse alignment followed by SICP. Writes the transform and RMSE trace.

    Args:
        - cfg (RunConfig): Run parameters.
        - recorder (RunRecorder): Output registry.
        - source (PointCloud): SfM cloud.
        - target (PointCloud or TriangleMesh): Scan.

    Returns:
        A SicpReport.
    """
    started = time.perf_counter()
    if cfg.coarse == "corr":
        pairs = Correspondences().read_file(require(cfg.correspondences, "--correspondences"))
        init = coarse_align_correspondences(pairs)
    elif cfg.coarse == "file":
        init = Transform().read_file(require(cfg.transform, "--initial-transform"))
    else:
        init = coarse_align_bbox(source, target)
    recorder.stage("coarse_alignment", started)

    started = time.perf_counter()
    target_cloud = target.vertices if isinstance(target, TriangleMesh) else target
    try:
        report = sicp_register(source, target_cloud, init, cfg)
    except utils.RegistrationError as ex:
        if ex.last_transform is not None:
            Transform().save_file(ex.last_transform, recorder.path(TRANSFORM_FN), True)
        raise
    recorder.stage("sicp", started)

    Transform().save_file(report.transform, recorder.path(TRANSFORM_FN), True)
    trace = pd.DataFrame(
        {"iteration": np.arange(1, len(report.rmse_trace) + 1), "rmse": report.rmse_trace}
    )
    utils.save_dataframe(trace, recorder.path(TRACE_FN), True)
    return report


def scan_frame_cameras(cameras, transform):
    return [transform_camera(cam, transform) for cam in cameras]


def render_masks(cfg, scan, cameras):
    """
    MaskSet per usable camera, None for unusable ones.
    """
    cache_dir = utils.get_cache_dir()
    out = []
    for i, cam in enumerate(cameras):
        if not cam.usable:
            logging.warning("Skipping unusable camera {}".format(i))
            out.append(None)
            continue
        out.append(
            quality_masks(
                scan,
                cam,
                cfg.splat_radius,
                cfg.border_width,
                cfg.depth_jump,
                cfg.normal_neighbors,
                cache_dir,
            )
        )
        logging.debug("Rendered masks for camera {}".format(i))
    return out


def run_masks(cfg, recorder, scan, cameras, fns):
    """
    Dumps every mask layer of every camera as a 16-bit PNG with a text
    sidecar giving the value range.
    """
    started = time.perf_counter()
    for fn, masks in zip(fns, render_masks(cfg, scan, cameras)):
        if masks is None:
            continue
        stem = os.path.splitext(os.path.basename(fn))[0]
        for layer in MASK_LAYERS:
            values = getattr(masks, layer)
            values = values.depth if layer == "depth" else values.weight
            png, lo, hi = ImageFile.write_dump(values)
            name = os.path.join(MASKS_DIR, "{}_{}".format(stem, layer))
            utils.save_bytes(png, recorder.path(name + ".png"), True)
            utils.save_plaintext(
                ImageFile.dump_sidecar(lo, hi), recorder.path(name + ".txt"), True
            )
    recorder.stage("masks", started)


def run_colorize(cfg, recorder, scan, cameras, images, patch_center=None, patch_size=None):
    """
    Colors the scan and writes the colored PLY, report and displacements.

    Args:
        - cfg (RunConfig): Run parameters.
        - recorder (RunRecorder): Output registry.
        - scan (PointCloud or TriangleMesh): Scan geometry.
        - cameras (list): Scan-frame cameras, one per image.
        - images (list): Images.
        - patch_center (list, optional): Restrict coloring to a patch.
        - patch_size (int, optional): Points in the patch.

    Returns:
        A tuple (ColorizeReport, records).
    """
    started = time.perf_counter()
    views = [
        ImageView(i, cam, image, masks)
        for i, (cam, image, masks) in enumerate(
            zip(cameras, images, render_masks(cfg, scan, cameras))
        )
        if masks is not None
    ]
    recorder.stage("masks", started)

    patch = None
    if patch_center is not None:
        patch = extract_patch(scan, patch_center, patch_size)
        logging.info("Coloring a patch of {} points".format(len(patch)))

    colored, report, records = colorize_cloud(scan, views, cfg, patch)
    recorder.timings.update(report.timings)

    if isinstance(scan, TriangleMesh):
        colored = scan.with_vertices(colored)
    PLY().save_file(colored, recorder.path(COLORED_FN), True)
    utils.save_json_file(report.to_dict(), recorder.path(REPORT_FN), True)
    utils.save_dataframe(
        displacements_to_dataframe(records), recorder.path(DISPLACEMENTS_FN), True
    )
    return report, records


def run_synth(args, cfg, recorder):
    """
    Generates, perturbs and saves a synthetic scene.
    """
    started = time.perf_counter()
    spec = synthetic.SceneSpec.from_preset(
        cfg.preset,
        kind=cfg.kind,
        n_vertices=cfg.vertices,
        n_images=cfg.n_images,
        width=cfg.width,
        height=cfg.height,
        arc=args.arc,
        elevation=args.elevation,
        renderer=args.renderer,
    )
    scene = synthetic.generate_scene(cfg.seed, spec)
    camera = args.perturb_camera
    if args.shift is not None:
        scene = synthetic.perturb_scene(scene, "principal-shift", tuple(args.shift), cfg.seed, camera)
    if args.camera_rotation is not None:
        scene = synthetic.perturb_scene(scene, "camera-rotation", args.camera_rotation, cfg.seed, camera)
    if args.similarity is not None:
        scene = synthetic.perturb_scene(scene, "cloud-similarity", args.similarity, cfg.seed)
    if args.point_noise is not None:
        scene = synthetic.perturb_scene(scene, "gaussian-point-noise", args.point_noise, cfg.seed)
    recorder.stage("generate", started)

    started = time.perf_counter()
    for name in synthetic.save_scene(scene, recorder.folder, overwrite=True):
        recorder.path(name)
    recorder.stage("save", started)


def run_eval(args, recorder):
    """
    Scores a run folder against a synthetic scene folder.

    Returns:
        A ScoreReport.
    """
    scene = synthetic.load_scene(args.scene)
    colored = PLY().read_file(os.path.join(args.run, COLORED_FN))

    transform = None
    transform_fn = os.path.join(args.run, TRANSFORM_FN)
    if os.path.isfile(transform_fn):
        transform = Transform().read_file(transform_fn)

    records = None
    displacements_fn = os.path.join(args.run, DISPLACEMENTS_FN)
    if os.path.isfile(displacements_fn):
        try:
            records = records_from_dataframe(pd.read_csv(displacements_fn))
        except (ValueError, pd.errors.ParserError) as ex:
            raise utils.DataParseError("Invalid {}: {}".format(displacements_fn, ex)) from None

    uncolored = None
    report_fn = os.path.join(args.run, REPORT_FN)
    if os.path.isfile(report_fn):
        try:
            uncolored = json.loads(utils.read_bytes(report_fn).decode("utf-8"))["uncolored"]
        except (ValueError, KeyError) as ex:
            raise utils.DataParseError("Invalid {}: {}".format(report_fn, ex)) from None

    score = synthetic.evaluate_run(scene, colored, transform, records, uncolored)
    utils.save_json_file(score.to_dict(), recorder.path(SCORE_FN), True)
    for name, ok in sorted(score.check().items()):
        logging.info("{:<28} {}".format(name, "pass" if ok else "FAIL"))
    return score


def run(args):
    """
    Runs one subcommand.

    Args:
        - args (argparse.Namespace): Parsed arguments.

    Returns:
        The exit code.
    """
    cfg = load_run_config(args)
    output = require(cfg.output, "--output")
    recorder = RunRecorder(output, args.command)
    code = EXIT_OK

    if args.command == "enhance":
        run_enhance(cfg, recorder)
    elif args.command == "synth":
        run_synth(args, cfg, recorder)
    elif args.command == "eval":
        score = run_eval(args, recorder)
        if args.strict and not score.passed:
            logging.error("Run failed at least one check")
            code = EXIT_NUMERICAL
    else:
        scan = load_scan(require(cfg.scan, "--scan"))
        fns, images = load_images(require(cfg.images, "--images"))
        recon = load_reconstruction(require(cfg.bundler, "--bundler"), images)
        if args.command == "register":
            run_register(cfg, recorder, recon.sparse_points, scan)
        else:
            if args.command == "fuse":
                transform = run_register(cfg, recorder, recon.sparse_points, scan).transform
            else:
                transform = load_transform(cfg.transform)
            cameras = scan_frame_cameras(recon.cameras, transform)
            if args.command == "masks":
                run_masks(cfg, recorder, scan, cameras, fns)
            else:
                run_colorize(
                    cfg, recorder, scan, cameras, images, args.patch_center, args.patch_size
                )

    recorder.write_manifest()
    return code


def main(argv=None):
    """
    Entry point into the script.

    Args:
        - argv (list, optional): Arguments, defaults to sys.argv[1:].

    Returns:
        The exit code: 0 on success, 1 on input errors, 2 on numerical
        failures.
    """
    try:
        args = parse_args(argv)
    except SystemExit as ex:
        return EXIT_OK if ex.code in (0, None) else EXIT_INPUT

    try:
        utils.setup_loggers(args.log, logging.DEBUG if args.verbose else logging.INFO)
    except utils.SetupError:
        logging.error("Error in setting up loggers.")
        logging.error(traceback.format_exc())
        return EXIT_INPUT

    try:
        return run(args)
    except NUMERICAL_ERRORS as ex:
        logging.error("Numerical failure: {}".format(ex))
        logging.error(traceback.format_exc())
        return EXIT_NUMERICAL
    except INPUT_ERRORS as ex:
        logging.error("Input error: {}".format(ex))
        logging.error(traceback.format_exc())
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
