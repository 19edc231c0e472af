"""
    factories.py
    ~~~~~~~~~~~~

    Builds instances of Format classes and the run configuration.
"""

import configparser
import logging
import os

from scancolor.formats.PLY import PLY
from scancolor.formats.Bundler import Bundler
from scancolor.formats.ImageFile import ImageFile
from scancolor.config import RunConfig
from scancolor.utils import SetupError, UnsupportedFormatError

# INI section, key, parser
CONFIG_KEYS = {
    "scan": ("Paths", str),
    "bundler": ("Paths", str),
    "images": ("Paths", str),
    "output": ("Paths", str),
    "correspondences": ("Paths", str),
    "transform": ("Paths", str),
    "coarse": ("Registration", str),
    "sicp_tolerance": ("Registration", float),
    "sicp_max_iterations": ("Registration", int),
    "reject_sigma": ("Registration", float),
    "visibility_epsilon": ("Projection", float),
    "splat_radius": ("Projection", int),
    "border_width": ("Projection", int),
    "depth_jump": ("Projection", float),
    "normal_neighbors": ("Projection", int),
    "block_size": ("Colorize", int),
    "search_radius": ("Colorize", int),
    "best_k": ("Colorize", int),
    "local_correction": ("Colorize", bool),
    "uncolored_color": ("Colorize", tuple),
    "reference_width": ("Colorize", int),
    "preset": ("Synthetic", str),
    "kind": ("Synthetic", str),
    "vertices": ("Synthetic", int),
    "n_images": ("Synthetic", int),
    "width": ("Synthetic", int),
    "height": ("Synthetic", int),
    "seed": ("Synthetic", int),
}


def format_factory(filename):
    """
    Returns an instance of the Format sub-class that handles a geometry or
    image file, chosen by its extension.

    Args:
        - filename (str): File name or path.

    Returns:
        An instance of PLY or ImageFile.
    """
    factory = {
        ".ply": PLY,
        ".png": ImageFile,
        ".ppm": ImageFile,
        ".out": Bundler,
    }
    extension = os.path.splitext(filename)[1].lower()
    try:
        cls = factory[extension]
    except KeyError:
        raise UnsupportedFormatError(
            "No format for '{}', available extensions are {}.".format(
                extension, list(factory.keys())
            )
        ) from None

    if cls is ImageFile:
        return cls(extension)
    return cls()


def _read_value(cfg, section, key, kind):
    if kind is bool:
        return cfg.getboolean(section, key)
    raw = cfg.get(section, key).strip()
    if kind is tuple:
        return tuple(float(v) for v in raw.replace(",", " ").split())
    return kind(raw)


def run_config_factory(cfg=None):
    """
    Builds a RunConfig from a parsed INI file.

    Keys that are absent, or present with a blank value, keep their
    built-in default.

    Args:
        - cfg (configparser.ConfigParser, optional): Parsed config file. If
            None, the built-in defaults are returned.

    Returns:
        A RunConfig instance.
    """
    if cfg is None:
        return RunConfig()

    values = {}
    for key, (section, kind) in CONFIG_KEYS.items():
        if not cfg.has_option(section, key):
            continue
        if cfg.get(section, key).strip() == "":
            continue
        try:
            values[key] = _read_value(cfg, section, key, kind)
        except (ValueError, configparser.Error) as ex:
            raise SetupError(
                "Invalid value for [{}] {}: {}".format(section, key, ex)
            ) from None

    for section in cfg.sections():
        for key in cfg.options(section):
            if key not in CONFIG_KEYS:
                logging.warning("Ignoring unknown config key [{}] {}".format(section, key))

    return RunConfig(**values)
