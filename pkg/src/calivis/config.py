"""Pipeline configuration and its flat ``key = value`` text format.

One setting per line; values are JSON literals (bare words are read as
strings), ``#`` starts a comment. Only the field names of
:class:`PipelineConfig` are accepted.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from .calibration import FCB_MODES, check_aspects
from .errors import ValidationError
from .tracker import MatchConfig


@dataclass(frozen=True)
class PipelineConfig:
    alpha: float = 1.0
    beta: float = 1.0
    epsilon: float = 0.3
    nms_iou: float = 0.5
    top_k: int = 100
    score_threshold: float = 0.05
    corr_side: int = 11
    # [k_w, k_h] per anchor, index-aligned with anchor_aspects (w / h)
    kernel_aspects: tuple = ((3, 3), (3, 5), (5, 3))
    anchor_aspects: tuple = (1.0, 0.6, 1.6667)
    anchor_scale: float = 8.0
    stride: float = 4.0
    k_proto: int = 8
    e_dim: int = 8
    fcb_mode: str = "none"
    binarize_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kernel_aspects", tuple(tuple(int(v) for v in k) for k in self.kernel_aspects))
        object.__setattr__(self, "anchor_aspects", tuple(float(r) for r in self.anchor_aspects))
        for name in ("top_k", "corr_side", "k_proto", "e_dim"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be a positive count")
        if self.corr_side % 2 == 0:
            raise ValidationError("corr_side must be odd")
        if self.stride <= 0 or self.anchor_scale <= 0:
            raise ValidationError("stride and anchor_scale must be positive")
        if self.fcb_mode not in FCB_MODES:
            raise ValidationError(f"fcb_mode must be one of {FCB_MODES}")
        if not 0 < self.binarize_threshold < 1:
            raise ValidationError("binarize_threshold must lie in (0, 1)")
        if any(len(k) != 2 for k in self.kernel_aspects):
            raise ValidationError("kernel_aspects entries are [k_w, k_h] pairs")
        check_aspects(self.kernel_aspects, self.anchor_aspects)
        MatchConfig(self.alpha, self.beta, self.epsilon, self.binarize_threshold)

    @property
    def match(self) -> MatchConfig:
        return MatchConfig(self.alpha, self.beta, self.epsilon, self.binarize_threshold)

    def replace(self, **changes) -> "PipelineConfig":
        return PipelineConfig(**{**asdict(self), **changes})


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def loads_config(text: str) -> PipelineConfig:
    known = {f.name for f in fields(PipelineConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(raw)
    try:
        return PipelineConfig(**values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad config value: {exc}") from exc


def dumps_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = json.loads(json.dumps(v))
        lines.append(f"{f.name} = {json.dumps(v)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> PipelineConfig:
    with open(path) as f:
        return loads_config(f.read())
