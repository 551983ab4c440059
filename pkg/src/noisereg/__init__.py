"""Regularization by noise: penalties, Dropout/DropConnect, and artificial data
generated by perturbing inputs, labels or latent features."""

__version__ = "0.1.0"
