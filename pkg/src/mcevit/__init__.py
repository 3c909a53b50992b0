"""Two-branch vision transformer for telling GAN, graphics and real images apart."""

__version__ = "0.1.0"
