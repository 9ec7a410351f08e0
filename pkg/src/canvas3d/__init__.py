"""canvas3d: prompt-driven 3D scene composition and generative-model conditioning."""

__version__ = "0.1.0"
