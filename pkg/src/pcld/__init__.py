"""Lossless grayscale image codec with parametric, context-dependent Laplace residue models."""

from .container import CodecConfig, EncodeResult, compress, decompress, encode_image, header_size_bits
from .errors import ConfigError, DecodeError, DegenerateFitError, PcldError, PGMError
from .pixio import Image, load_pgm, read_pgm, save_pgm, write_pgm

__version__ = "0.1.0"
