"""Dense-network GAN on MNIST plus an exact t-SNE for comparing synthetic
and real digits."""

__version__ = "0.1.0"
