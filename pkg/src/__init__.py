"""Uncertainty-aware Wi-Fi CSI activity recognition: VAE latents + evidential MLPs."""

__version__ = "1.0.0"
