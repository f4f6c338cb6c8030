"""WAV, CSV and PGM helpers for the command line tools."""

from __future__ import annotations

import csv
import wave
from pathlib import Path

import numpy as np


class WavFormatError(ValueError):
    pass


def read_wav(path, sample_rate: int = 16000) -> np.ndarray:
    """Read 16-bit mono PCM at ``sample_rate`` into floats in [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as err:
        raise WavFormatError(f"{path}: not a PCM WAV file ({err})") from None
    problems = []
    if channels != 1:
        problems.append(f"{channels} channels (need mono)")
    if width != 2:
        problems.append(f"{8 * width}-bit samples (need 16-bit)")
    if rate != sample_rate:
        problems.append(f"{rate} Hz (need {sample_rate} Hz; resample first)")
    if problems:
        raise WavFormatError(f"{path}: " + ", ".join(problems))
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def write_wav(path, signal, sample_rate: int = 16000) -> None:
    pcm = np.clip(np.round(np.asarray(signal) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        w.writerows(rows)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_pgm(path, image, max_value: int | None = None) -> None:
    """Binary (P5) 8-bit PGM; ``image`` holds integers in ``[0, max_value]``."""
    img = np.asarray(image)
    top = int(img.max()) if max_value is None else int(max_value)
    if top <= 0 or top > 255:
        raise ValueError("PGM max value must lie in 1..255")
    if img.min() < 0 or img.max() > top:
        raise ValueError("pixel values outside [0, max_value]")
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n{top}\n".encode("ascii") + img.astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8, count=w * h).reshape(h, w)


def write_spectrogram_csv(path, spec) -> None:
    """One row per (bin, frame) with real and imaginary part."""
    v = spec.values
    rows = ((f, n, repr(float(v[f, n].real)), repr(float(v[f, n].imag)))
            for f in range(v.shape[0]) for n in range(v.shape[1]))
    write_csv(path, ["bin", "frame", "real", "imag"], rows)
