"""PCLD container: header layout and whole-image compress/decompress.

Layout (all multi-byte integers big-endian, floats IEEE-754 float64 big-endian)::

    "PCLD"  u8 version=1  u16 width  u16 height  u8 scan (0 raster, 1 haar)
    [u8 cycles]                                   haar only
    u8 predictor (0 MED, 1 AVG, 2 LINEAR + 4 f64 alpha)
    u8 width (0 SINGLE + f64 b | 1 CTX365 + 24 f64 thresholds + 365 f64 table
              | 2 LIN4 + 4 f64 | 3 LIN11 + 10 f64)
    f64 kappa  u8 coder (0 Golomb, 1 rANS)  u8 adaptive  u32 symbol count
    [u8 share_cycles  u16 n_blocks  n_blocks x scan block]   haar only

    scan block: u8 cycle  u8 scan  u8 d  d x f64 alpha
                u8 width kind (0 single, 1 linear)  u8 n  n x f64 beta

In Haar mode the predictor/width fields describe scan 0 (the coarse average
grid); the scan blocks describe the detail scans. The payload follows the
header directly: Golomb codewords MSB-first, or a self-delimiting rANS stream.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import codec
from .codec import GolombReader, RansReader, RasterModel, Stream
from .errors import ConfigError, DecodeError
from .multiscale import MAX_CYCLES, SCAN_DIM, SCAN_DH, SCAN_DVL, SCAN_DVR, ScanModel, build_pyramid
from .pixio import Image
from .predict import PredictorKind, PredictorParams
from .width import BASIS_DIM, KAPPA_GRID, N_CONTEXTS, WidthKind, WidthModel

MAGIC = b"PCLD"
VERSION = 1

PREDICTORS = ("med", "avg", "ls")
WIDTHS = ("single", "ctx365", "lin4", "lin11")
CODERS = ("golomb", "accurate")
SCANS = ("raster", "haar")

_PRED_KIND = {"med": PredictorKind.MED, "avg": PredictorKind.AVG, "ls": PredictorKind.LINEAR}
_WIDTH_KIND = {"single": WidthKind.SINGLE, "ctx365": WidthKind.CTX365, "lin4": WidthKind.LIN4, "lin11": WidthKind.LIN11}


@dataclass(frozen=True)
class CodecConfig:
    predictor: str = "ls"
    width: str = "lin4"
    coder: str = "accurate"
    scan: str = "raster"
    cycles: int | None = None
    kappa: float = 1.0
    adaptive: bool = False
    share_cycles: bool = False

    def validate(self) -> "CodecConfig":
        for name, value, allowed in (
            ("predictor", self.predictor, PREDICTORS),
            ("width", self.width, WIDTHS),
            ("coder", self.coder, CODERS),
            ("scan", self.scan, SCANS),
        ):
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")
        if self.kappa not in KAPPA_GRID:
            raise ConfigError(f"kappa must be one of {KAPPA_GRID}")
        if self.scan == "raster":
            if self.cycles is not None:
                raise ConfigError("cycles only apply to the haar scan")
            if self.share_cycles:
                raise ConfigError("share-cycles only applies to the haar scan")
        elif self.cycles is None or not 1 <= self.cycles <= MAX_CYCLES:
            raise ConfigError(f"haar scan needs cycles in 1..{MAX_CYCLES}")
        if self.adaptive and self.width != "single":
            raise ConfigError("adaptive mode only drives the single-b width model")
        return self


# --- header serialization ----------------------------------------------------------------

@dataclass
class Header:
    width: int
    height: int
    scan: int
    cycles: int
    predictor: PredictorParams
    width_model: WidthModel
    kappa: float
    coder: int
    adaptive: bool
    symbol_count: int
    share_cycles: bool = False
    scan_models: list[ScanModel] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        out = bytearray(MAGIC)
        out += struct.pack(">BHHB", VERSION, self.width, self.height, self.scan)
        if self.scan == 1:
            out += struct.pack(">B", self.cycles)
        out += struct.pack(">B", self.predictor.kind.value)
        if self.predictor.kind is PredictorKind.LINEAR:
            out += struct.pack(">4d", *self.predictor.alpha)
        wm = self.width_model
        out += struct.pack(">B", wm.kind.value)
        if wm.kind is WidthKind.SINGLE:
            out += struct.pack(">d", wm.b)
        elif wm.kind is WidthKind.CTX365:
            flat = [t for ch in wm.thresholds for t in ch]
            out += struct.pack(f">{len(flat)}d", *flat)
            out += struct.pack(f">{N_CONTEXTS}d", *wm.table)
        else:
            out += struct.pack(f">{len(wm.beta)}d", *wm.beta)
        out += struct.pack(">dBBI", self.kappa, self.coder, int(self.adaptive), self.symbol_count)
        if self.scan == 1:
            out += struct.pack(">BH", int(self.share_cycles), len(self.scan_models))
            for m in self.scan_models:
                d = len(m.alpha)
                out += struct.pack(f">BBB{d}d", m.cycle, m.scan, d, *m.alpha)
                out += struct.pack(f">BB{len(m.beta)}d", int(m.linear_width), len(m.beta), *m.beta)
        return bytes(out)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise DecodeError(f"truncated header at byte {self.pos}")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals


def parse_header(data: bytes) -> tuple[Header, int]:
    if len(data) < 4 or data[:4] != MAGIC:
        raise DecodeError("not a PCLD stream")
    cur = _Cursor(data)
    cur.pos = 4
    version, width, height, scan = cur.take(">BHHB")
    if version != VERSION:
        raise DecodeError(f"unsupported PCLD version {version}")
    if width < 1 or height < 1:
        raise DecodeError("image dimensions must be positive")
    if scan not in (0, 1):
        raise DecodeError(f"unknown scan mode {scan}")
    cycles = 0
    if scan == 1:
        (cycles,) = cur.take(">B")
        if not 1 <= cycles <= MAX_CYCLES:
            raise DecodeError(f"bad cycle count {cycles}")
    (pk,) = cur.take(">B")
    try:
        pkind = PredictorKind(pk)
    except ValueError:
        raise DecodeError(f"unknown predictor kind {pk}") from None
    alpha = cur.take(">4d") if pkind is PredictorKind.LINEAR else None
    (wk,) = cur.take(">B")
    try:
        wkind = WidthKind(wk)
    except ValueError:
        raise DecodeError(f"unknown width model {wk}") from None
    if wkind is WidthKind.SINGLE:
        wparams = {"b": cur.take(">d")[0]}
    elif wkind is WidthKind.CTX365:
        flat = cur.take(">24d")
        wparams = {
            "thresholds": tuple(tuple(flat[8 * ch : 8 * ch + 8]) for ch in range(3)),
            "table": cur.take(f">{N_CONTEXTS}d"),
        }
    else:
        wparams = {"beta": cur.take(f">{BASIS_DIM[wkind]}d")}
    kappa, coder, adaptive, count = cur.take(">dBBI")
    if coder not in (0, 1):
        raise DecodeError(f"unknown coder {coder}")
    try:
        predictor = PredictorParams(pkind, alpha)
        width_model = WidthModel(wkind, kappa=kappa, **wparams)
    except ValueError as exc:
        raise DecodeError(f"invalid model parameters: {exc}") from None
    header = Header(width, height, scan, cycles, predictor, width_model, kappa, coder, bool(adaptive), count)
    if scan == 1:
        share, nblocks = cur.take(">BH")
        header.share_cycles = bool(share)
        for _ in range(nblocks):
            cyc, st, d = cur.take(">BBB")
            if st not in (SCAN_DH, SCAN_DVL, SCAN_DVR) or d != SCAN_DIM[st]:
                raise DecodeError(f"bad scan block (scan {st}, d {d})")
            a = cur.take(f">{d}d")
            lw, nb = cur.take(">BB")
            if nb != (d if lw else 1):
                raise DecodeError("bad width block size")
            header.scan_models.append(ScanModel(st, cyc, a, cur.take(f">{nb}d"), bool(lw), kappa))
    return header, cur.pos


def header_size_bits(config: CodecConfig) -> int:
    """Exact serialized header size for a configuration, computed from the layout."""
    config.validate()
    size = 4 + 1 + 2 + 2 + 1
    if config.scan == "haar":
        size += 1
    size += 1 + (32 if config.predictor == "ls" else 0)
    size += 1 + {"single": 8, "ctx365": 8 * (24 + N_CONTEXTS), "lin4": 8 * 4, "lin11": 8 * BASIS_DIM[WidthKind.LIN11]}[config.width]
    size += 8 + 1 + 1 + 4
    if config.scan == "haar":
        size += 1 + 2
        cycles = 1 if config.share_cycles else config.cycles
        linear = config.width != "single"
        for scan in (SCAN_DH, SCAN_DVL, SCAN_DVR):
            d = SCAN_DIM[scan]
            size += cycles * (3 + 8 * d + 2 + 8 * (d if linear else 1))
    return 8 * size


# --- orchestration ------------------------------------------------------------------------

@dataclass
class EncodeResult:
    data: bytes
    header_bits: int
    payload_bits: int
    ideal_bits: float
    symbol_count: int
    seconds: float = 0.0

    def bits_per_pixel(self, n_pixels: int, ideal: bool = False, header: bool = True) -> float:
        bits = self.ideal_bits if ideal else self.payload_bits
        if header:
            bits += self.header_bits
        return bits / n_pixels


def encode_image(img: Image, config: CodecConfig) -> EncodeResult:
    config.validate()
    if img.width > 0xFFFF or img.height > 0xFFFF:
        raise ConfigError("image dimensions exceed 65535")
    t0 = time.perf_counter()
    kappa = float(config.kappa)
    if config.scan == "raster":
        model = codec.fit_raster_model(img.pixels, config.predictor, config.width, kappa, config.adaptive)
        stream, _ = codec.encode_raster(img.pixels, model)
        streams = [stream]
        scan_models: list[ScanModel] = []
        cycles = 0
    else:
        pyr = build_pyramid(img, config.cycles)
        model = codec.fit_raster_model(pyr.scan0, config.predictor, config.width, kappa, config.adaptive)
        stream0, _ = codec.encode_raster(pyr.scan0, model)
        scan_models = codec.fit_detail_models(
            pyr, config.share_cycles, config.width != "single", kappa, config.adaptive
        )
        streams = [stream0] + codec.detail_streams(pyr, scan_models, config.share_cycles, config.adaptive)
        cycles = config.cycles
    count = sum(len(s.symbols) for s in streams)
    header = Header(
        width=img.width,
        height=img.height,
        scan=SCANS.index(config.scan),
        cycles=cycles,
        predictor=model.predictor,
        width_model=model.width,
        kappa=kappa,
        coder=CODERS.index(config.coder),
        adaptive=config.adaptive,
        symbol_count=count,
        share_cycles=config.share_cycles,
        scan_models=scan_models,
    )
    head = header.to_bytes()
    if config.coder == "golomb":
        payload, payload_bits = codec.golomb_payload(streams)
    else:
        payload = codec.accurate_payload(streams)
        payload_bits = 8 * len(payload)
    return EncodeResult(
        data=head + payload,
        header_bits=8 * len(head),
        payload_bits=payload_bits,
        ideal_bits=codec.ideal_bits(streams),
        symbol_count=count,
        seconds=time.perf_counter() - t0,
    )


def compress(img: Image, config: CodecConfig | None = None) -> bytes:
    return encode_image(img, config or CodecConfig()).data


def decompress(data: bytes) -> Image:
    header, offset = parse_header(bytes(data))
    payload = bytes(data[offset:])
    reader = GolombReader(payload) if header.coder == 0 else RansReader(payload)
    model = RasterModel(header.predictor, header.width_model, header.adaptive)
    try:
        if header.scan == 0:
            pixels = codec.decode_raster(header.height, header.width, model, reader)
        else:
            k = header.cycles
            h0 = -(-header.height // (1 << k))
            w0 = -(-header.width // (1 << k))
            L = codec.decode_raster(h0, w0, model, reader)
            for c in range(1, k + 1):
                L = codec.decode_cycle(L, header.scan_models, c, header.share_cycles, header.adaptive, reader)
            pixels = L[: header.height, : header.width]
    except (IndexError, ValueError) as exc:
        raise DecodeError(f"corrupt payload: {exc}") from None
    if reader.count != header.symbol_count:
        raise DecodeError(f"symbol count mismatch: header {header.symbol_count}, decoded {reader.count}")
    reader.finish()
    return Image(pixels)
