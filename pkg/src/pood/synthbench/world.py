"""Synthetic benchmark worlds and their on-disk format.

A world bundles a training split, an uncorrupted ID test split, and one
OOD group per (corruption kind, severity) configuration. Every image has
its own seed drawn from the ``(world seed, split, index)`` substream, so a
world is a pure function of its arguments.

On disk a world is a directory holding ``manifest.json`` plus, per split,
``<split>.pixels.f64`` (little-endian float64, C order, shape ``(n, H, W)``)
and ``<split>.masks.u8`` (uint8 0/1, same shape).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..exceptions import SchemaError
from ..records import atomic_write_bytes, atomic_write_text
from .corruptions import MAX_SEVERITY, SEVERITY_TABLES, check_kind, check_severity, corrupt
from .images import DEFAULT_SIZE, ImageMeta, SynthImage, render_image

MANIFEST_NAME = "manifest.json"
WORLD_FORMAT = "pood-synth-world/1"
SPLITS = ("train", "id_test", "ood")
_SPLIT_CODE = {name: i for i, name in enumerate(SPLITS)}
DEFAULT_SEVERITIES = tuple(range(MAX_SEVERITY + 1))


def derive_seed(*entropy: int) -> int:
    """Deterministic 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(e) for e in entropy]).generate_state(1)[0])


@dataclass
class SynthWorld:
    seed: int
    size: int
    train: list[SynthImage]
    id_test: list[SynthImage]
    ood: list[SynthImage]
    configs: list[tuple[str, int]] = field(default_factory=list)

    def ood_group(self, kind: str, severity: int) -> list[SynthImage]:
        return [im for im in self.ood if im.meta.corruption == kind and im.meta.severity == severity]

    def split(self, name: str) -> list[SynthImage]:
        return getattr(self, name)


def generate_world(
    n_train: int,
    n_id_test: int,
    n_ood_per_config: int,
    seed: int,
    corruptions: Sequence[str] = ("gaussian-noise",),
    severities: Sequence[int] = DEFAULT_SEVERITIES,
    size: int = DEFAULT_SIZE,
) -> SynthWorld:
    """Render a deterministic benchmark world.

    OOD images are fresh clean renders (disjoint from ``id_test``) that are
    then corrupted, so the severity-0 group acts as an uncorrupted holdout.
    """
    for name, n in (("n_train", n_train), ("n_id_test", n_id_test), ("n_ood_per_config", n_ood_per_config)):
        if n < 1:
            raise ValueError(f"{name} must be >= 1, got {n}")
    configs = [(check_kind(k), check_severity(s)) for k in corruptions for s in severities]

    def render_split(split: str, n: int) -> list[SynthImage]:
        code = _SPLIT_CODE[split]
        return [render_image(derive_seed(seed, code, i), size) for i in range(n)]

    train = render_split("train", n_train)
    id_test = render_split("id_test", n_id_test)
    bases = render_split("ood", n_ood_per_config * len(configs))
    ood = []
    for c, (kind, severity) in enumerate(configs):
        for j in range(n_ood_per_config):
            base = bases[c * n_ood_per_config + j]
            ood.append(corrupt(base, kind, severity, derive_seed(base.meta.seed, 1)))
    return SynthWorld(seed, size, train, id_test, ood, configs)


# --- persistence ---------------------------------------------------------------


def world_manifest(world: SynthWorld, extra: dict | None = None) -> dict:
    manifest = {
        "format": WORLD_FORMAT,
        "seed": world.seed,
        "size": world.size,
        "counts": {name: len(world.split(name)) for name in SPLITS},
        "configs": [{"corruption": k, "severity": s} for k, s in world.configs],
        "severity_tables": {k: list(v) for k, v in SEVERITY_TABLES.items()},
        "pixel_encoding": "float64 little-endian, C order, shape (n, size, size)",
        "mask_encoding": "uint8 0/1, C order, shape (n, size, size)",
        "splits": {
            name: {
                "pixels": f"{name}.pixels.f64",
                "masks": f"{name}.masks.u8",
                "images": [
                    {"seed": im.meta.seed, "corruption": im.meta.corruption, "severity": im.meta.severity}
                    for im in world.split(name)
                ],
            }
            for name in SPLITS
        },
    }
    if extra:
        manifest.update(extra)
    return manifest


def save_world(world: SynthWorld, directory: str | os.PathLike, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        images = world.split(name)
        shape = (len(images), world.size, world.size)
        pixels = np.empty(shape, dtype="<f8")
        masks = np.empty(shape, dtype=np.uint8)
        for i, im in enumerate(images):
            pixels[i] = im.pixels
            masks[i] = im.mask
        atomic_write_bytes(directory / f"{name}.pixels.f64", pixels.tobytes(order="C"))
        atomic_write_bytes(directory / f"{name}.masks.u8", masks.tobytes(order="C"))
    manifest = world_manifest(world, extra)
    atomic_write_text(directory / MANIFEST_NAME, json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return directory / MANIFEST_NAME


def load_world(directory: str | os.PathLike) -> SynthWorld:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_NAME).read_text(encoding="utf-8"))
    if manifest.get("format") != WORLD_FORMAT:
        raise SchemaError(f"{directory}: not a synthetic world (format {manifest.get('format')!r})")
    size = int(manifest["size"])
    splits = {}
    for name in SPLITS:
        info = manifest["splits"][name]
        n = len(info["images"])
        shape = (n, size, size)
        pixels = np.frombuffer((directory / info["pixels"]).read_bytes(), dtype="<f8")
        masks = np.frombuffer((directory / info["masks"]).read_bytes(), dtype=np.uint8)
        if pixels.size != n * size * size or masks.size != n * size * size:
            raise SchemaError(f"{directory}: {name} image files do not match manifest counts")
        pixels = pixels.reshape(shape).astype(np.float64)
        masks = masks.reshape(shape).astype(bool)
        splits[name] = [
            SynthImage(pixels[i], masks[i], ImageMeta(int(m["seed"]), m["corruption"], int(m["severity"])))
            for i, m in enumerate(info["images"])
        ]
    configs = [(c["corruption"], int(c["severity"])) for c in manifest["configs"]]
    return SynthWorld(int(manifest["seed"]), size, splits["train"], splits["id_test"], splits["ood"], configs)
