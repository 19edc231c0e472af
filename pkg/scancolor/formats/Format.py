"""
    scancolor.formats.Format.py
    ~~~~~~~~~~~~~~~~~~~~~~~~~~~

    Contains the abstract base class for Format instances, which represent an
    on-disk file format consumed or produced by the pipeline. Each sub-class
    converts between raw bytes and the in-memory types, and the base class
    provides the file-system plumbing shared by all of them.
"""

from abc import ABC, abstractmethod
import logging
import scancolor.utils as utils


class Format(ABC):
    """
    The abstract base class for Format.

    Attributes:
        - name (str, abstract): A human readable name for the format.
        - extensions (tuple): Lower-case filename extensions, including the
            leading dot, that identify the format.

    Methods:
        - parse (abstract): Converts raw bytes into an in-memory object.
        - write (abstract): Converts an in-memory object into raw bytes.
        - read_file: Loads and parses a file from disk.
        - save_file: Serializes an object and saves it to disk.
    """

    extensions = ()

    # Name is both abstract and a class method
    @property
    @classmethod
    @abstractmethod
    def name(cls):
        """
        A human readable name for the format as a string.
        """

    @abstractmethod
    def parse(self, data):
        """
        Converts raw bytes into an in-memory object.

        Abstract method that must have a concrete implementation provided by
        sub-classes. Every failure must surface as a DataParseError (or a
        subclass) or an UnsupportedFormatError.

        Args:
            - data (bytes): Raw file contents.

        Returns:
            The parsed object.
        """

    @abstractmethod
    def write(self, obj):
        """
        Converts an in-memory object into raw bytes.

        Abstract method that must have a concrete implementation provided by
        sub-classes. Output must be deterministic for a given input.

        Args:
            - obj: The object to serialize.

        Returns:
            bytes
        """

    def read_file(self, filename):
        """
        Loads a file from disk and parses it.

        Args:
            - filename (str): Location of the file.

        Returns:
            The parsed object.
        """
        logging.debug("Reading {} file {}".format(self.name, filename))
        return self.parse(utils.read_bytes(filename))

    def save_file(self, obj, filename, overwrite=False):
        """
        Serializes an object and saves it to disk.

        Args:
            - obj: The object to serialize.
            - filename (str): Location to save to.
            - overwrite (bool, optional): Whether an existing file may be
                replaced. Defaults to False.

        Returns:
            None, saves to disk as a side-effect.
        """
        logging.debug("Saving {} file {}".format(self.name, filename))
        utils.save_bytes(self.write(obj), filename, overwrite)
