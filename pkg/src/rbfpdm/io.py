"""Persistence: particle files, run configs, checkpoints, metric reports.

The particle file is the correspondence encoding: line j of every shape
file holds the j-th corresponding particle, as `x y z nx ny nz` in plain
decimal with 17 significant digits.
"""

from __future__ import annotations

import glob as globmod
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .losses import LossConfig
from .optimizer import OptimizerConfig
from .surface import ParticleSystem


def save_particles(ps: ParticleSystem, path) -> None:
    with open(path, "w") as fh:
        for p, n in zip(ps.points, ps.normals):
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g} "
                     f"{n[0]:.17g} {n[1]:.17g} {n[2]:.17g}\n")


def load_particles(path, shape_id: int = 0) -> ParticleSystem:
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            parts = raw.split()
            if len(parts) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: empty particle file")
    arr = np.asarray(rows)
    return ParticleSystem(points=arr[:, :3], normals=arr[:, 3:], shape_id=shape_id)


def save_checkpoint(state, out_dir) -> None:
    d = os.path.join(out_dir, "checkpoints", f"epoch_{state.epoch:04d}")
    os.makedirs(d, exist_ok=True)
    for i, ps in enumerate(state.systems):
        save_particles(ps, os.path.join(d, f"particles_{i:03d}.txt"))


@dataclass
class RunConfig:
    """Everything needed to reproduce a run, parsed from a flat config file."""

    grids: list = field(default_factory=list)  # paths or glob patterns
    output: str = "out"
    particles: int = 64
    kernel: str = "biharmonic"
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    band_auto: bool = False  # s derived from voxel spacing at run time
    learning_rate: float = 1.0
    epochs: int = 100
    pre_opt_epochs: int = 0
    checkpoint_every: int = 0
    threads: int = 1
    regularization: float = 0.0
    modes: int = 10
    specificity_samples: int = 1000

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=self.seed,
            pre_opt_epochs=self.pre_opt_epochs,
            kernel=self.kernel,
            regularization=self.regularization,
            loss=self.loss,
            checkpoint_every=self.checkpoint_every,
            checkpoint_dir=self.output,
            threads=self.threads,
        )

    def resolve_grid_paths(self) -> list:
        paths = []
        for pattern in self.grids:
            hits = sorted(globmod.glob(pattern))
            paths.extend(hits if hits else [pattern])
        return paths


_SECTIONS = ("run", "loss", "optimizer", "metrics")


def parse_config(text: str) -> RunConfig:
    """Parse the flat `[section]` / `key = value` format."""
    cfg = RunConfig()
    loss_kwargs = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise FormatError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line or section is None:
            raise FormatError(f"line {lineno}: expected 'key = value' inside a section")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            _apply_key(cfg, loss_kwargs, section, key, value)
        except (ValueError, KeyError) as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
    cfg.loss = LossConfig(**loss_kwargs) if loss_kwargs else LossConfig()
    if cfg.band_auto:
        # placeholder value, replaced once grids are loaded
        cfg.loss.s = 1.0
    return cfg


def _apply_key(cfg: RunConfig, loss_kwargs: dict, section: str, key: str, value: str):
    if section == "run":
        if key == "grids":
            cfg.grids = value.split()
        elif key == "output":
            cfg.output = value
        elif key == "particles":
            cfg.particles = int(value)
        elif key == "kernel":
            cfg.kernel = value
        elif key == "seed":
            cfg.seed = int(value)
        else:
            raise KeyError(f"unknown run key {key!r}")
    elif section == "loss":
        if key == "s" and value == "auto":
            cfg.band_auto = True
            return
        if key in ("alpha", "beta", "gamma", "zeta", "c", "s", "eps_cov"):
            loss_kwargs[key] = float(value)
        elif key in ("batch_size", "band_samples"):
            loss_kwargs[key] = int(value)
        else:
            raise KeyError(f"unknown loss key {key!r}")
    elif section == "optimizer":
        if key in ("learning_rate", "regularization"):
            setattr(cfg, key, float(value))
        elif key in ("epochs", "pre_opt_epochs", "checkpoint_every", "threads"):
            setattr(cfg, key, int(value))
        else:
            raise KeyError(f"unknown optimizer key {key!r}")
    elif section == "metrics":
        if key in ("modes", "specificity_samples"):
            setattr(cfg, key, int(value))
        else:
            raise KeyError(f"unknown metrics key {key!r}")


def serialize_config(cfg: RunConfig) -> str:
    s_value = "auto" if cfg.band_auto else f"{cfg.loss.s:.17g}"
    lines = [
        "[run]",
        f"grids = {' '.join(cfg.grids)}",
        f"output = {cfg.output}",
        f"particles = {cfg.particles}",
        f"kernel = {cfg.kernel}",
        f"seed = {cfg.seed}",
        "",
        "[loss]",
        f"alpha = {cfg.loss.alpha:.17g}",
        f"beta = {cfg.loss.beta:.17g}",
        f"gamma = {cfg.loss.gamma:.17g}",
        f"zeta = {cfg.loss.zeta:.17g}",
        f"c = {cfg.loss.c:.17g}",
        f"s = {s_value}",
        f"batch_size = {cfg.loss.batch_size}",
        f"band_samples = {cfg.loss.band_samples}",
        f"eps_cov = {cfg.loss.eps_cov:.17g}",
        "",
        "[optimizer]",
        f"learning_rate = {cfg.learning_rate:.17g}",
        f"epochs = {cfg.epochs}",
        f"pre_opt_epochs = {cfg.pre_opt_epochs}",
        f"checkpoint_every = {cfg.checkpoint_every}",
        f"threads = {cfg.threads}",
        f"regularization = {cfg.regularization:.17g}",
        "",
        "[metrics]",
        f"modes = {cfg.modes}",
        f"specificity_samples = {cfg.specificity_samples}",
    ]
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
