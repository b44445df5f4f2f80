"""RIFF/WAVE reading and writing for PCM 8/16/24/32-bit and 32-bit float.

Errors carry a short ``reason`` code and the chunk they were raised in, so a
batch run can report exactly which file part was bad.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import AudioClip

__all__ = ["WavError", "WavData", "read_wav", "load_wav", "write_wav", "decode_wav", "encode_wav"]

PCM = 1
IEEE_FLOAT = 3
EXTENSIBLE = 0xFFFE
_PCM_WIDTHS = (8, 16, 24, 32)


class WavError(ValueError):
    """Malformed or unsupported WAV data."""

    def __init__(self, reason: str, chunk: str, message: str):
        super().__init__(f"{reason} in {chunk!r} chunk: {message}")
        self.reason = reason
        self.chunk = chunk


@dataclass(frozen=True)
class WavData:
    """Decoded frames before downmixing; ``frames`` has shape ``(n, channels)``."""

    sample_rate: int
    frames: np.ndarray
    bits: int
    codec: int

    @property
    def channels(self) -> int:
        return self.frames.shape[1]


def _chunks(data: bytes):
    if len(data) < 12:
        raise WavError("truncated_header", "RIFF", f"only {len(data)} bytes")
    riff, _, wave = struct.unpack("<4sI4s", data[:12])
    if riff != b"RIFF":
        raise WavError("not_riff", "RIFF", f"magic is {riff!r}")
    if wave != b"WAVE":
        raise WavError("not_wave", "RIFF", f"form type is {wave!r}")
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack("<4sI", data[pos:pos + 8])
        name = cid.decode("latin-1")
        body = data[pos + 8:pos + 8 + size]
        yield name, size, body
        pos += 8 + size + (size & 1)


def _parse_fmt(body: bytes) -> tuple[int, int, int, int, int]:
    if len(body) < 16:
        raise WavError("bad_fmt", "fmt ", f"chunk is {len(body)} bytes, need 16")
    codec, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", body[:16])
    if codec == EXTENSIBLE:
        if len(body) < 26:
            raise WavError("bad_fmt", "fmt ", "extensible format without a subformat")
        codec = struct.unpack("<H", body[24:26])[0]
    if channels < 1 or rate < 1:
        raise WavError("bad_fmt", "fmt ", f"{channels} channels at {rate} Hz")
    if codec == PCM and bits not in _PCM_WIDTHS:
        raise WavError("unsupported_codec", "fmt ", f"{bits}-bit PCM")
    if codec == IEEE_FLOAT and bits != 32:
        raise WavError("unsupported_codec", "fmt ", f"{bits}-bit float")
    if codec not in (PCM, IEEE_FLOAT):
        raise WavError("unsupported_codec", "fmt ", f"format tag {codec:#06x}")
    if block_align != channels * bits // 8:
        raise WavError("bad_fmt", "fmt ", f"block align {block_align} does not match {channels}x{bits} bits")
    return codec, channels, rate, block_align, bits


def _decode_samples(raw: bytes, codec: int, bits: int) -> np.ndarray:
    if codec == IEEE_FLOAT:
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if bits == 8:
        return (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if bits == 16:
        return np.frombuffer(raw, dtype="<i2") / 32768.0
    if bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        return ints / float(1 << 23)
    return np.frombuffer(raw, dtype="<i4") / float(1 << 31)


def decode_wav(data: bytes) -> WavData:
    """Parse an in-memory WAV file."""
    fmt = None
    for name, size, body in _chunks(data):
        if name == "fmt ":
            fmt = _parse_fmt(body)
        elif name == "data":
            if fmt is None:
                raise WavError("missing_fmt", "data", "data chunk precedes fmt chunk")
            codec, channels, rate, block_align, bits = fmt
            if len(body) < size:
                raise WavError("truncated_data", "data", f"header declares {size} bytes, found {len(body)}")
            if size % block_align:
                raise WavError("truncated_data", "data", f"{size} bytes is not a whole number of frames")
            samples = _decode_samples(body, codec, bits)
            return WavData(rate, samples.reshape(-1, channels), bits, codec)
    if fmt is None:
        raise WavError("missing_fmt", "fmt ", "no fmt chunk")
    raise WavError("missing_data", "data", "no data chunk")


def read_wav(path: str | Path) -> WavData:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise WavError("unreadable", "RIFF", f"{path}: {exc.strerror or exc}") from exc
    return decode_wav(data)


def load_wav(path: str | Path) -> AudioClip:
    """Mono clip from a WAV file; channels are averaged."""
    wav = read_wav(path)
    if wav.frames.shape[0] == 0:
        raise WavError("empty", "data", "no sample frames")
    mono = wav.frames.mean(axis=1) if wav.channels > 1 else wav.frames[:, 0]
    if not np.all(np.isfinite(mono)):
        raise WavError("non_finite", "data", "samples contain NaN or infinity")
    return AudioClip(mono, wav.sample_rate)


def encode_wav(samples: np.ndarray, sample_rate: int, bits: int = 16, float_format: bool = False) -> bytes:
    """WAV bytes for ``samples`` of shape ``(n,)`` or ``(n, channels)`` in [-1, 1].

    PCM quantisation rounds ``x * 2^(bits-1)`` and saturates, so any value
    decoded from a file of the same width encodes back to the same integer.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("samples must be 1-D or 2-D")
    channels = x.shape[1]
    if float_format:
        codec, bits = IEEE_FLOAT, 32
        payload = x.astype("<f4").tobytes()
    else:
        if bits not in _PCM_WIDTHS:
            raise ValueError(f"unsupported PCM width {bits}")
        codec = PCM
        scale = float(1 << (bits - 1))
        ints = np.clip(np.round(x * scale), -scale, scale - 1).astype(np.int64)
        if bits == 8:
            payload = (ints + 128).astype(np.uint8).tobytes()
        elif bits == 16:
            payload = ints.astype("<i2").tobytes()
        elif bits == 24:
            u = (ints & 0xFFFFFF).astype("<u4").reshape(-1, 1).view(np.uint8).reshape(-1, 4)
            payload = u[:, :3].tobytes()
        else:
            payload = ints.astype("<i4").tobytes()
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", codec, channels, int(sample_rate), int(sample_rate) * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def write_wav(path: str | Path, clip: AudioClip | np.ndarray, sample_rate: int | None = None,
              bits: int = 16, float_format: bool = False) -> None:
    if isinstance(clip, AudioClip):
        samples, rate = clip.samples, clip.sample_rate
    else:
        if sample_rate is None:
            raise ValueError("sample_rate is required for raw arrays")
        samples, rate = clip, sample_rate
    Path(path).write_bytes(encode_wav(samples, rate, bits, float_format))
