"""Run configuration: defaults, profiles, key=value files and the config digest."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError, MissingFile

PROFILES = {
    "desk": {"hidden_dim": 64, "latent_dim": 32},
    "paper": {"hidden_dim": 1600, "latent_dim": 1600},
}

# Fields that do not change the trained model and are left out of the digest.
_DIGEST_EXCLUDE = {"dataset_path", "out_dir"}


@dataclass
class RunConfig:
    dataset_path: str = ""
    window_size: int = 48
    stride: int = 1
    profile: str = "desk"
    hidden_dim: int | None = None
    latent_dim: int | None = None
    diffusion_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    kl_weight: float = 0.2
    denoising_weight: float = 1.0
    fourier_weight: float = 1.0
    epochs: int = 500
    batch_size: int = 128
    lr: float = 0.01
    seed: int = 0
    recon_source: str = "denoised"
    no_kl: bool = False
    no_denoising: bool = False
    no_fourier: bool = False
    out_dir: str = "runs"

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}; choose from {sorted(PROFILES)}")
        prof = PROFILES[self.profile]
        if self.hidden_dim is None:
            self.hidden_dim = prof["hidden_dim"]
        if self.latent_dim is None:
            self.latent_dim = prof["latent_dim"]
        for name in ("window_size", "stride", "hidden_dim", "latent_dim", "diffusion_steps", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("beta_start", "beta_end", "lr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("kl_weight", "denoising_weight", "fourier_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.recon_source not in ("denoised", "posterior"):
            raise ConfigError(f"recon_source must be 'denoised' or 'posterior', got {self.recon_source!r}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    @property
    def beta_range(self) -> tuple[float, float]:
        return (self.beta_start, self.beta_end)

    def digest(self) -> bytes:
        """sha256 over the canonical JSON of every model-affecting field."""
        payload = {k: v for k, v in asdict(self).items() if k not in _DIGEST_EXCLUDE}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).digest()


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    text = raw.strip()
    try:
        if "bool" in kind:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return text


def parse_config_text(text: str) -> dict:
    """Parse key=value lines; '#' starts a comment; blank lines are ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "beta_range":
            parts = value.replace(",", " ").split()
            if len(parts) != 2:
                raise ConfigError(f"line {lineno}: beta_range needs two numbers")
            out["beta_start"], out["beta_end"] = (_coerce("beta_start", p) for p in parts)
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except FileNotFoundError as exc:
        raise MissingFile(f"config file not found: {path}") from exc


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """File values first, then overrides (``None`` entries are ignored)."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**merged)


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(cfg).items())
