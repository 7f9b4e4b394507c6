"""Spectrum-map estimation with a conditional diffusion model, plus joint
optimization of the estimation-energy / transmission-rate trade-off for an
energy-constrained measuring-and-transmitting UAV."""

__version__ = "0.1.0"
