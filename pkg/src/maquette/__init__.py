"""maquette: virtual-manikin access/visibility planning and
passivity-preserving motion-capture-driven simulation."""

__version__ = "0.1.0"
