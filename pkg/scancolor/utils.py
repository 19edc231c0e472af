"""
    utils.py
    ~~~~~~~~

    Contains utility functions and the exception classes shared by every
    stage of the pipeline.
"""

import os
import json
import hashlib
import tempfile
import configparser
import logging

from dotenv import load_dotenv

CONFIG_FN = "config.ini"
MANIFEST_FN = "manifest.json"
CACHE_ENV_VAR = "SCANCOLOR_CACHE_DIR"


class SetupError(Exception):
    """
    Custom exception class for errors associated with CLI setup.
    """


class DataReadingError(Exception):
    """
    Custom exception class for situations where reading a file from disk
    has failed.
    """


class DataSavingError(Exception):
    """
    Custom exception class for situations where saving a file has failed.
    """


class DataParseError(Exception):
    """
    Custom exception class for situations where the contents of a file
    cannot be parsed.
    """


class TruncationError(DataParseError):
    """
    Custom exception class for files whose declared element counts don't
    match their contents.
    """


class UnsupportedFormatError(Exception):
    """
    Custom exception class for file formats or format versions that aren't
    supported.
    """


class GeometryError(Exception):
    """
    Custom exception class for invalid point clouds, meshes and transforms.
    """


class DegenerateGeometryError(Exception):
    """
    Custom exception class for geometry that is valid but too degenerate for
    the requested computation, i.e. a zero-size bounding box.
    """


class InsufficientCorrespondencesError(Exception):
    """
    Custom exception class for coarse alignment with fewer than 3 pairs.
    """


class DimensionMismatchError(Exception):
    """
    Custom exception class for blocks or masks whose sizes differ.
    """


class RegistrationError(Exception):
    """
    Custom exception class for SICP runs that produced a nonfinite update.

    The last valid transform and the RMSE trace up to the failure are kept
    as attributes so callers can still use them.
    """

    def __init__(self, message, last_transform=None, trace=None):
        super().__init__(message)
        self.last_transform = last_transform
        self.trace = [] if trace is None else list(trace)


class ColorizationError(Exception):
    """
    Custom exception class for colorization runs where no camera sees any
    point.
    """


class EvaluationError(Exception):
    """
    Custom exception class for pipeline outputs that can't be scored against
    a synthetic scene.
    """


def setup_loggers(logfn=None, level=logging.INFO):
    """
    Configures loggers.

    By default, the log is printed to stderr, although it can be saved to
    file in addition.

    Args:
        - logfn (str, optional): File to save log to. If None then doesn't
            write log to file.
        - level (int, optional): Logging level of the root logger.

    Returns:
        None. the logger is accessed by the global module `logging`.
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    log_fmt = logging.Formatter(
        "%(asctime)-8s:%(levelname)s: %(message)s", datefmt="%Y-%m-%d,%H:%M:%S"
    )
    cli_logger = logging.StreamHandler()
    cli_logger.setFormatter(log_fmt)
    root_logger.addHandler(cli_logger)

    if not logfn is None:
        if os.path.isfile(logfn):
            raise SetupError(
                ("Log file {} already exists. " "Halting execution.").format(logfn)
            )
        file_logger = logging.FileHandler(logfn)
        file_logger.setFormatter(log_fmt)
        root_logger.addHandler(file_logger)

    # Silence matplotlib's font manager, which logs heavily at DEBUG
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def setup_config(filename=None):
    """
    Loads configuration parameters from an INI file into memory.

    Args:
        - filename (str, optional): The configuration file. Defaults to
            config.ini in the working directory. A missing default file is
            not an error, an explicitly requested one is.

    Returns:
        A configparser.ConfigParser instance, possibly with no sections.
    """
    cfg = configparser.ConfigParser()
    if filename is None:
        cfg.read(CONFIG_FN)
        return cfg

    if not os.path.isfile(filename):
        raise SetupError("Config file '{}' not found".format(filename))

    try:
        cfg.read(filename)
    except configparser.Error as ex:
        raise SetupError("Cannot parse '{}': {}".format(filename, ex)) from None

    if len(cfg.sections()) == 0:
        raise SetupError("No sections found in '{}'".format(filename))

    return cfg


def get_cache_dir():
    """
    Obtains the mask cache directory from the environment.

    Variables are either passed in as environment variables or read in from
    a local .env file when developing; dotenv doesn't overwrite variables
    that are already set.

    Args:
        - None.

    Returns:
        The cache directory as a string, or None when caching is disabled.
    """
    load_dotenv()
    folder = os.environ.get(CACHE_ENV_VAR)
    if folder is None or folder.strip() == "":
        return None
    return folder


def read_bytes(filename):
    """
    Reads a whole file into memory.

    Args:
        - filename (str): Location of the file.

    Returns:
        The file contents as bytes.
    """
    try:
        with open(filename, "rb") as infile:
            return infile.read()
    except FileNotFoundError:
        raise DataReadingError("Cannot find file {}".format(filename)) from None
    except IsADirectoryError:
        raise DataReadingError("{} is a directory".format(filename)) from None
    except IOError:
        raise DataReadingError("Unable to read file {}.".format(filename)) from None


def save_bytes(data, filename, overwrite=False):
    """
    Saves raw bytes to disk.

    Args:
        - data (bytes): Content to be saved.
        - filename (str): Location to save data to.
        - overwrite (bool, optional): Whether an existing file may be
            replaced. Defaults to False.

    Returns:
        None. Saves data to disk as a side-effect.
    """
    if not overwrite and os.path.isfile(filename):
        raise DataSavingError("File {} already exists".format(filename))

    try:
        with open(filename, "wb") as outfile:
            outfile.write(data)
    except FileNotFoundError:
        raise DataSavingError("Cannot save to file {}.".format(filename)) from None


def save_plaintext(text, filename, overwrite=False):
    """
    Saves string directly to disk.

    Args:
        - text (str): Text to be saved.
        - filename (str): Location to save data to
        - overwrite (bool, optional): Whether an existing file may be
            replaced. Defaults to False.

    Returns:
        None. Saves text to disk as a side-effect.
    """
    save_bytes(text.encode("utf-8"), filename, overwrite)


def save_json_file(data, filename, overwrite=False):
    """
    Encodes data as JSON and saves it to disk.

    Keys are sorted and the indentation fixed so that identical data always
    produces identical bytes.

    Args:
        - data (object): Data in JSON-serializable format.
        - filename (str): Location to save data to.
        - overwrite (bool, optional): Whether an existing file may be
            replaced. Defaults to False.

    Returns:
        None. Saves data to disk as JSON files as a side-effect.
    """
    try:
        text = json.dumps(data, indent=2, sort_keys=True)
    except (TypeError, ValueError):
        raise DataSavingError("Unable to serialize data to json.") from None
    save_plaintext(text + "\n", filename, overwrite)


def save_dataframe(data, filename, overwrite=False):
    """
    Saves a pandas dataframe to disk as CSV without its index.

    Args:
        - data (pandas.DataFrame): Input data frame.
        - filename (str): Location to save data frame to.
        - overwrite (bool, optional): Whether an existing file may be
            replaced. Defaults to False.

    Returns:
        None, saves to disk as a side effect.
    """
    if not overwrite and os.path.isfile(filename):
        raise DataSavingError("File {} already exists".format(filename))

    try:
        data.to_csv(filename, index=False, lineterminator="\n")
    except FileNotFoundError:
        raise DataSavingError("Cannot save to file {}".format(filename)) from None


def atomic_write(data, filename):
    """
    Writes bytes to a temporary file in the target folder then renames it, so
    concurrent readers never see a partial file.

    Args:
        - data (bytes): Content to be saved.
        - filename (str): Final location.

    Returns:
        None.
    """
    folder = os.path.dirname(os.path.abspath(filename))
    os.makedirs(folder, exist_ok=True)
    handle, tmp_fn = tempfile.mkstemp(dir=folder, suffix=".tmp")
    try:
        with os.fdopen(handle, "wb") as outfile:
            outfile.write(data)
        os.replace(tmp_fn, filename)
    except OSError as ex:
        if os.path.exists(tmp_fn):
            os.remove(tmp_fn)
        raise DataSavingError("Cannot write {}: {}".format(filename, ex)) from None


def content_hash(*parts):
    """
    Hashes a sequence of byte strings, strings and numpy arrays.

    Args:
        - parts: The values to hash, in order. Arrays are hashed by their
            dtype, shape and raw bytes.

    Returns:
        The hex sha256 digest.
    """
    digest = hashlib.sha256()
    for part in parts:
        if hasattr(part, "tobytes"):
            digest.update(str(part.dtype).encode("ascii"))
            digest.update(str(part.shape).encode("ascii"))
            digest.update(part.tobytes())
        elif isinstance(part, bytes):
            digest.update(part)
        else:
            digest.update(str(part).encode("utf-8"))
        digest.update(b"|")
    return digest.hexdigest()


def file_hash(filename):
    """
    Hashes the contents of a file on disk.

    Args:
        - filename (str): Location of the file.

    Returns:
        The hex sha256 digest.
    """
    return hashlib.sha256(read_bytes(filename)).hexdigest()


def ensure_folder(folder):
    """
    Creates a folder, including parents, if it doesn't already exist.

    Args:
        - folder (str): Folder path.

    Returns:
        None.
    """
    try:
        os.makedirs(folder, exist_ok=True)
    except OSError as ex:
        raise DataSavingError("Cannot create folder {}: {}".format(folder, ex)) from None
