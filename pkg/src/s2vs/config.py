"""Flat ``key = value`` run configuration using the hyperparameter table's names.

Lines are ``name = value``; ``#`` starts a comment. Ranges are written as
``(lo, hi)``. Unknown keys and malformed values raise :class:`ConfigError`.
"""

from __future__ import annotations

import ast
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentConfig
from .errors import ConfigError
from .losses import LossConfig
from .train import TrainConfig
from .video import CorpusSpec


@dataclass(frozen=True)
class Key:
    name: str
    section: str  # train | loss | augment | corpus
    attr: str
    kind: type
    help: str


KEYS: tuple[Key, ...] = (
    Key("iterations", "train", "iterations", int, "training iterations"),
    Key("batch_size", "train", "batch_videos", int, "views per batch B = 2N (even)"),
    Key("learning_rate", "train", "lr", float, "AdamW peak learning rate"),
    Key("weight_decay", "train", "weight_decay", float, "AdamW weight decay"),
    Key("warmup_iterations", "train", "warmup_iters", int, "linear warm-up length"),
    Key("seed", "train", "seed", int, "training seed (batches, psi init)"),
    Key("backbone_seed", "train", "backbone_seed", int, "seed of the frozen toy backbone"),
    Key("whitening_dim", "train", "whitening_dim", int, "PCA-whitening output dimension"),
    Key("whitening_samples", "train", "whitening_samples", int, "region vectors used to fit whitening"),
    Key("dtype", "train", "dtype", str, "float32 or float64"),
    Key("log_every", "train", "log_every", int, "train_log.jsonl interval"),
    Key("checkpoint_every", "train", "checkpoint_every", int, "periodic checkpoint interval (0 = off)"),
    Key("T_B", "augment", "T_B", int, "frames per batch video"),
    Key("H_B", "augment", "H_B", int, "frame side in batch (W_B = H_B)"),
    Key("tau", "loss", "tau", float, "InfoNCE temperature"),
    Key("lambda", "loss", "lam", float, "SSHN loss factor"),
    Key("r", "loss", "r", float, "similarity regularization factor"),
    Key("use_ss", "loss", "use_ss", bool, "enable the self-similarity term"),
    Key("use_hn", "loss", "use_hn", bool, "enable the hard-negative term"),
    Key("N_RAug", "augment", "N_RAug", int, "RandAugment number of transformations"),
    Key("M_RAug", "augment", "M_RAug", int, "RandAugment magnitude (0-30)"),
    Key("p_overlay", "augment", "p_overlay", float, "text / emoji overlay probability"),
    Key("p_blur", "augment", "p_blur", float, "blur probability"),
    Key("p_tsd", "augment", "p_tsd", float, "temporal shuffle-dropout probability"),
    Key("p_ff", "augment", "p_ff", float, "fast-forward probability"),
    Key("p_sm", "augment", "p_sm", float, "slow-motion probability"),
    Key("p_rev", "augment", "p_rev", float, "reverse probability"),
    Key("p_pau", "augment", "p_pau", float, "pause probability"),
    Key("p_shuf", "augment", "p_shuf", float, "TSD shuffle probability"),
    Key("p_drop", "augment", "p_drop", float, "TSD dropout probability"),
    Key("p_cont", "augment", "p_cont", float, "TSD content-drop probability"),
    Key("p_viv", "augment", "p_viv", float, "video-in-video probability"),
    Key("lambda_viv", "augment", "lambda_viv", tuple, "video-in-video scale range (lo, hi)"),
    Key("crop_scale", "augment", "crop_scale", tuple, "random resized crop area range"),
    Key("num_videos", "corpus", "num_videos", int, "synthetic corpus size"),
    Key("duration_range", "corpus", "duration_range", tuple, "synthetic video length range in seconds"),
    Key("motif_count", "corpus", "motif_count", int, "motifs shared across synthetic videos"),
    Key("corpus_seed", "corpus", "seed", int, "synthetic corpus seed"),
    Key("frame_size", "corpus", "frame_size", tuple, "synthetic frame (height, width)"),
)
KEY_INDEX = {k.name: k for k in KEYS}


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    corpus: CorpusSpec = field(default_factory=CorpusSpec)


def _parse_value(key: Key, raw: str):
    raw = raw.strip()
    try:
        if key.kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if key.kind is str:
            return raw.strip("\"'")
        if key.kind is tuple:
            value = ast.literal_eval(raw)
            if not isinstance(value, (tuple, list)) or len(value) != 2:
                raise ValueError(raw)
            return tuple(value)
        if key.kind is int:
            value = float(raw.replace("_", ""))
            if value != int(value):
                raise ValueError(raw)
            return int(value)
        return float(raw)
    except (ValueError, SyntaxError) as exc:
        raise ConfigError(f"bad value for {key.name}: {raw!r}") from exc


def parse_text(text: str) -> dict:
    """``{key: value}`` for every assignment in ``text``."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        name, raw = (s.strip() for s in line.split("=", 1))
        if name not in KEY_INDEX:
            raise ConfigError(f"line {lineno}: unknown key {name!r}")
        values[name] = _parse_value(KEY_INDEX[name], raw)
    return values


def build(values: dict, base: RunConfig | None = None) -> RunConfig:
    """Apply ``values`` on top of ``base`` (defaults when omitted) and validate."""
    base = base or RunConfig()
    sections = {
        "train": {f.name: getattr(base.train, f.name) for f in dataclasses.fields(TrainConfig)
                  if f.name not in ("loss", "augment")},
        "loss": dataclasses.asdict(base.train.loss),
        "augment": dataclasses.asdict(base.train.augment),
        "corpus": dataclasses.asdict(base.corpus),
    }
    for name, value in values.items():
        key = KEY_INDEX.get(name)
        if key is None:
            raise ConfigError(f"unknown key {name!r}")
        if name == "batch_size":
            if value < 4 or value % 2:
                raise ConfigError("batch_size must be an even number >= 4")
            value //= 2
        sections[key.section][key.attr] = value
    try:
        train = TrainConfig(**sections["train"], loss=LossConfig(**sections["loss"]),
                            augment=AugmentConfig(**sections["augment"]))
        corpus = CorpusSpec(**sections["corpus"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(train, corpus)


def load(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            values.update(parse_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values.update(overrides or {})
    return build(values)


def values_of(cfg: RunConfig) -> dict:
    out = {}
    for key in KEYS:
        section = {"train": cfg.train, "loss": cfg.train.loss, "augment": cfg.train.augment,
                   "corpus": cfg.corpus}[key.section]
        value = getattr(section, key.attr)
        out[key.name] = 2 * value if key.name == "batch_size" else value
    return out


def dump(cfg: RunConfig) -> str:
    lines = []
    for name, value in values_of(cfg).items():
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, tuple):
            value = "(" + ", ".join(repr(v) for v in value) + ")"
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"


def preset_path(name: str) -> Path:
    return Path(__file__).parent / "presets" / f"{name}.cfg"


def help_text() -> str:
    width = max(len(k.name) for k in KEYS)
    return "config keys:\n" + "\n".join(f"  {k.name:<{width}}  {k.help}" for k in KEYS)
