"""Dataclass configuration for every pipeline component.

RunConfig nests the per-component configs, validates cross-field consistency
(codebook size, chunk count, and sequence length are shared), and round-trips
through JSON so a run is fully reproducible from one file plus a seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class VQConfig:
    """Chunked shared-codebook autoencoder."""

    image_size: int = 32
    latent_size: int = 8          # latent grid is latent_size x latent_size
    n_z: int = 32                 # latent channels before chunking
    codebook_size: int = 128      # K, shared across all chunks
    chunks: int = 4               # channel groups quantized independently
    beta: float = 0.25            # commitment weight
    base_channels: int = 32
    lambda_rec: float = 1.0
    lambda_per: float = 0.3
    lambda_vq: float = 1.0
    lambda_adv: float = 0.1
    adv_warmup_frac: float = 0.25  # adversarial weight is 0 for this fraction of steps

    @property
    def d_chunk(self) -> int:
        return self.n_z // self.chunks

    @property
    def downsample_factor(self) -> int:
        return self.image_size // self.latent_size

    @property
    def n_tokens(self) -> int:
        return self.latent_size * self.latent_size

    def validate(self) -> None:
        if self.codebook_size < 2:
            raise ValueError("codebook_size must be >= 2")
        if self.n_z % self.chunks:
            raise ValueError("n_z must be divisible by chunks")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        f = self.downsample_factor
        if f * self.latent_size != self.image_size or f & (f - 1):
            raise ValueError("image_size / latent_size must be a power of 2")


@dataclass(frozen=True)
class TransformerConfig:
    """Bidirectional token model with visibility-weighted attention."""

    n_layers: int = 3
    heads: int = 4
    width: int = 64               # token channel count C
    w_floor: float = 0.02         # weights live in (w_floor, 1]
    loss_positions: str = "all"   # {"all", "hidden"}: positions entering the NLL

    def validate(self, chunks: int) -> None:
        if self.width % self.heads:
            raise ValueError("width must be divisible by heads")
        if self.width % chunks:
            raise ValueError("width must be divisible by chunks")
        if self.loss_positions not in ("all", "hidden"):
            raise ValueError("loss_positions must be 'all' or 'hidden'")
        if not 0 < self.w_floor < 1:
            raise ValueError("w_floor must be in (0, 1)")


@dataclass(frozen=True)
class RefineConfig:
    """Upsampling refinement network; loss weights reuse VQConfig's lambdas."""

    channels: int = 24
    patch_size: int = 3           # contextual copy window, odd

    def validate(self) -> None:
        if self.patch_size % 2 == 0:
            raise ValueError("patch_size must be odd")


@dataclass(frozen=True)
class SampleConfig:
    mode: str = "one_time"        # {"one_time", "autoregressive", "top1"}
    top_k: int = 20
    num_samples: int = 10
    seed: int = 0
    keep_visible: bool = True

    def validate(self, codebook_size: int) -> None:
        if self.mode not in ("one_time", "autoregressive", "top1"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if not 1 <= self.top_k <= codebook_size:
            raise ValueError("top_k must be in [1, codebook_size]")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")


@dataclass(frozen=True)
class DatasetSpec:
    source: str = "synthetic_textures"   # or "image_directory"
    image_size: int = 64                 # full (refinement) resolution
    train_count: int = 64
    test_count: int = 16
    seed: int = 0
    directory: str = ""                  # used when source == "image_directory"

    def validate(self) -> None:
        if self.source not in ("synthetic_textures", "image_directory"):
            raise ValueError(f"unknown dataset source {self.source!r}")
        if self.train_count < 1 or self.test_count < 0:
            raise ValueError("counts must be positive")


@dataclass(frozen=True)
class TrainConfig:
    # step counts tuned so the toy run clears its quality margin on CPU
    # while staying inside the smoke-test time budget
    steps_codebook: int = 2000
    steps_transformer: int = 2500
    steps_refiner: int = 250
    batch_size: int = 8
    lr_codec: float = 2e-4
    lr_disc: float = 2e-4
    lr_refiner: float = 2e-4
    lr_transformer: float = 3e-4
    log_every: int = 50

    def validate(self) -> None:
        for name in ("steps_codebook", "steps_transformer", "steps_refiner"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    vq: VQConfig = field(default_factory=VQConfig)
    transformer: TransformerConfig = field(default_factory=TransformerConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    data: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "runs/toy"
    seed: int = 0

    def validate(self) -> "RunConfig":
        self.vq.validate()
        self.transformer.validate(self.vq.chunks)
        self.refine.validate()
        self.sample.validate(self.vq.codebook_size)
        self.data.validate()
        self.train.validate()
        if self.data.image_size != 2 * self.vq.image_size:
            raise ValueError("dataset resolution must be 2x the coarse resolution")
        return self

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return _from_dict(cls, json.loads(text)).validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    def config_hash(self) -> str:
        # out_dir is bookkeeping, not semantics: two runs that differ only
        # in where they write are the same experiment
        d = dataclasses.asdict(self)
        d.pop("out_dir", None)
        blob = json.dumps(d, indent=2, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _from_dict(cls, d: dict):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in d:
            continue
        v = d[f.name]
        if f.name in _NESTED and isinstance(v, dict):
            v = _from_dict(_NESTED[f.name], v)
        kwargs[f.name] = v
    return cls(**kwargs)


_NESTED = {
    "vq": VQConfig,
    "transformer": TransformerConfig,
    "refine": RefineConfig,
    "sample": SampleConfig,
    "data": DatasetSpec,
    "train": TrainConfig,
}


def toy_config(seed: int = 0, out_dir: str = "runs/toy") -> RunConfig:
    """The 64-image end-to-end configuration used by the smoke runs."""
    return RunConfig(seed=seed, out_dir=out_dir).validate()


def micro_config(seed: int = 0, out_dir: str = "runs/micro") -> RunConfig:
    """Tiny everything: for fast unit tests, not for quality."""
    return RunConfig(
        vq=VQConfig(image_size=16, latent_size=4, n_z=8, codebook_size=16,
                    chunks=2, base_channels=12),
        transformer=TransformerConfig(n_layers=2, heads=2, width=16),
        refine=RefineConfig(channels=8),
        sample=SampleConfig(top_k=5, num_samples=3),
        data=DatasetSpec(image_size=32, train_count=8, test_count=4),
        train=TrainConfig(steps_codebook=4, steps_transformer=4, steps_refiner=2,
                          batch_size=2, log_every=2),
        out_dir=out_dir,
        seed=seed,
    ).validate()
