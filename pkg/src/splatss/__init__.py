"""Post-rendering super sampling and frame interpolation for Gaussian splats."""

__version__ = "0.1.0"
