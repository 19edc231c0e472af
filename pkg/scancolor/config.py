"""
    config.py
    ~~~~~~~~~

    The run configuration: every tunable of registration, mask rendering,
    colorization and scene synthesis, with validation and the merge of
    command-line overrides on top of config file values.
"""

from dataclasses import dataclass, fields, replace

from scancolor.utils import SetupError

COARSE_MODES = ("bbox", "corr", "file")


@dataclass(frozen=True)
class RunConfig:
    """
    Run parameters. Defaults are the built-in values, the config file
    overrides them and CLI flags override both.

    visibility_epsilon of None means 0.5% of the scan's bounding box
    diagonal; reject_sigma of None disables correspondence rejection.
    """

    # Paths
    scan: str = None
    bundler: str = None
    images: str = None
    output: str = None
    correspondences: str = None
    transform: str = None

    # Registration
    coarse: str = "bbox"
    sicp_tolerance: float = 1e-6
    sicp_max_iterations: int = 100
    reject_sigma: float = None

    # Projection
    visibility_epsilon: float = None
    splat_radius: int = 2
    border_width: int = 20
    depth_jump: float = 0.01
    normal_neighbors: int = 10

    # Colorize
    block_size: int = 7
    search_radius: int = 15
    best_k: int = 3
    local_correction: bool = True
    uncolored_color: tuple = (0.5, 0.5, 0.5)
    reference_width: int = 4008

    # Synthetic
    preset: str = "desk"
    kind: str = None
    vertices: int = None
    n_images: int = None
    width: int = None
    height: int = None
    seed: int = 42

    def __post_init__(self):
        if self.block_size < 3 or self.block_size % 2 == 0:
            raise SetupError(
                "block_size must be odd and >= 3, got {}.".format(self.block_size)
            )
        if self.search_radius < 1:
            raise SetupError(
                "search_radius must be >= 1, got {}.".format(self.search_radius)
            )
        if self.best_k < 1:
            raise SetupError("best_k must be >= 1, got {}.".format(self.best_k))
        if not self.sicp_tolerance > 0:
            raise SetupError("sicp_tolerance must be positive.")
        if self.sicp_max_iterations < 1:
            raise SetupError("sicp_max_iterations must be >= 1.")
        if self.coarse not in COARSE_MODES:
            raise SetupError(
                "coarse must be one of {}, got '{}'.".format(COARSE_MODES, self.coarse)
            )
        if self.visibility_epsilon is not None and self.visibility_epsilon < 0:
            raise SetupError("visibility_epsilon must be non-negative.")
        if self.reject_sigma is not None and self.reject_sigma <= 0:
            raise SetupError("reject_sigma must be positive.")
        if self.splat_radius < 0 or self.border_width < 1:
            raise SetupError("splat_radius must be >= 0 and border_width >= 1.")
        if self.normal_neighbors < 3:
            raise SetupError("normal_neighbors must be >= 3.")
        color = tuple(float(c) for c in self.uncolored_color)
        if len(color) != 3 or min(color) < 0 or max(color) > 1:
            raise SetupError("uncolored_color must be 3 values in [0, 1].")
        object.__setattr__(self, "uncolored_color", color)

    def with_overrides(self, **overrides):
        """
        Returns a copy with the given keys replaced, skipping None values so
        that unset CLI flags leave the current values in place.
        """
        names = {f.name for f in fields(self)}
        unknown = set(overrides) - names
        if unknown:
            raise SetupError("Unknown configuration keys {}.".format(sorted(unknown)))
        changes = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **changes)

    def scaled_for_width(self, width):
        """
        Block size and search radius for images of the given width.

        Both grow linearly with width beyond reference_width; the block size
        is kept odd.

        Args:
            - width (int): Image width in pixels.

        Returns:
            A (block_size, search_radius) tuple.
        """
        if width <= self.reference_width:
            return self.block_size, self.search_radius
        ratio = width / float(self.reference_width)
        block = int(round(self.block_size * ratio))
        if block % 2 == 0:
            block += 1
        return block, int(round(self.search_radius * ratio))
