"""Run configuration. Defaults are the standard analysis choices."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, fields

ENV_OUTPUT_DIR = "TRADECORR_OUTPUT_DIR"
ENV_SEED = "TRADECORR_SEED"

# fields that change where or how fast results are produced, not what they are
_UNHASHED = {"output_dir", "n_jobs"}


@dataclass(frozen=True)
class RunConfig:
    inputs: tuple[str, ...] = ()
    instruments: tuple[str, ...] = ()
    venues: tuple[str, ...] = ()
    months: tuple[str, ...] = ()
    bucket_minutes: int = 60
    activity_threshold: float = 1.0 / 3.0
    sigma_mode: str = "unit"
    alpha: float = 0.05
    bootstrap_B: int = 1000
    bootstrap_k: int = 2
    block_length: int = 1
    seed: int = 0
    linkage: str = "complete"
    minority_trials: int = 100_000
    minority_min_months: int = 12
    exclude_singleton_minority: bool = False
    n_jobs: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        for name in ("inputs", "instruments", "venues", "months"):
            v = getattr(self, name)
            if isinstance(v, str):
                v = (v,)
            object.__setattr__(self, name, tuple(v))
        self.validate()

    def validate(self) -> None:
        if 420 % self.bucket_minutes:
            raise ValueError("bucket_minutes must divide the 420-minute session")
        if not 0 <= self.activity_threshold < 1:
            raise ValueError("activity_threshold must be in [0, 1)")
        if self.sigma_mode not in ("unit", "row_std"):
            raise ValueError("sigma_mode must be 'unit' or 'row_std'")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.bootstrap_B < 100:
            raise ValueError("bootstrap_B must be >= 100")
        if self.bootstrap_k < 1:
            raise ValueError("bootstrap_k must be >= 1")
        if self.block_length < 1:
            raise ValueError("block_length must be >= 1")
        if self.linkage not in ("complete", "single"):
            raise ValueError("linkage must be 'complete' or 'single'")
        if self.minority_trials < 10_000:
            raise ValueError("minority_trials must be >= 1e4")
        if self.minority_min_months < 0:
            raise ValueError("minority_min_months must be >= 0")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")
        for v in self.venues:
            if v not in ("on_book", "off_book"):
                raise ValueError(f"unknown venue {v!r}")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def hashed_fields(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in _UNHASHED}

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_fields(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_env(self, environ=None) -> "RunConfig":
        """Apply the output-directory and seed environment overrides."""
        env = os.environ if environ is None else environ
        changes = {}
        if env.get(ENV_OUTPUT_DIR):
            changes["output_dir"] = env[ENV_OUTPUT_DIR]
        if env.get(ENV_SEED):
            changes["seed"] = int(env[ENV_SEED])
        return self.replace(**changes) if changes else self
