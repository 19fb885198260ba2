"""Neural-texture avatar rendering on coarse skinned proxy meshes."""

__version__ = "0.1.0"
