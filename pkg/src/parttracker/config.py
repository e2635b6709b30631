"""Tracker configuration.

All tunables live in one flat dataclass so a run is reproducible from
(config, seed, sequence) alone.  Defaults follow the reference
parameterization of the tracker; the synthetic scenarios ship their own
desk-scale overrides (see synth.py) so the full test matrix stays fast
on one CPU.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import InvalidInputError


@dataclass
class TrackerConfig:
    # fusion
    alpha: float = 0.6              # weight of the filter-part map in the blend
    sigma_mask: float | None = None  # exp-decay scale of the center prior; None -> search_side / 4

    # search region / features
    s_search: float = 3.0           # search region side = s_search * max(box w, h)
    n_orient_bins: int = 6          # soft orientation channels (9 channels total)
    variance_floor: float = 1e-6

    # filter parts
    lambda_ridge: float = 0.1       # ridge penalty for part classifiers
    stride: int = 2                 # proposal grid stride, feature px
    scale_fractions: tuple = (0.25, 0.5, 1.0)  # patch sides as fractions of min box side
    t_d: float = 1.4                # discriminativeness ratio threshold
    n_neg_hard: int = 64            # hard negatives by edge density
    n_neg_rand: int = 16            # extra random outside patches
    sigma_g: float = 2.0            # gaussian smoothing of the aggregated vote map
    update_interval: int = 10       # U: lifecycle / retrain cadence, frames
    p_promote: float = 0.2          # f > p_promote promotes one step
    p_remove: float = 0.1           # f <= p_remove removes the part
    gold_windows: int = 5           # consecutive good windows before Reliable -> Gold
    n_max: int = 200                # budget of reliable+gold parts per scale

    # convnet pathway
    channel_plan: tuple = (8, 8, 16, 16, 16, 16, 16)  # encoder widths
    head_plan: tuple = (8, 4, 2, 1)                   # channel-reduction head
    lr: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    k_epochs: int = 10              # epochs per training event
    n_bootstrap: int = 20           # N: frames trained before the net joins fusion
    shift_frac: float = 0.10        # augmentation shift bound, fraction of crop side
    net_dtype: str = "float32"

    # confidence gating
    hcf_percentile: float = 11.0    # keep frames in the lowest 11% of pathway distance
    hcf_min_history: int = 20       # gate stays closed until this many distances seen
    update_policy: str = "hcf"      # "hcf" | "none" | "full"
    roles: str = "lifecycle"        # "lifecycle" | "single" (every part votes, no lifecycle)

    # bookkeeping
    seed: int = 0
    keep_votemaps: bool = False     # attach fused maps to diagnostics (for dumps)

    def __post_init__(self):
        if isinstance(self.scale_fractions, (int, float)):
            self.scale_fractions = (float(self.scale_fractions),)
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInputError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.s_search <= 1.0:
            raise InvalidInputError("s_search must exceed 1")
        if self.update_policy not in ("hcf", "none", "full"):
            raise InvalidInputError(f"unknown update_policy {self.update_policy!r}")
        if self.roles not in ("lifecycle", "single"):
            raise InvalidInputError(f"unknown roles {self.roles!r}")
        if self.update_interval < 1 or self.n_bootstrap < 1:
            raise InvalidInputError("update_interval and n_bootstrap must be >= 1")


def _parse_value(text: str):
    s = text.strip()
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    if "," in s:
        return tuple(_parse_value(p) for p in s.split(",") if p.strip())
    return s


def parse_config_text(text: str, base: TrackerConfig | None = None,
                      where: str = "<config>") -> TrackerConfig:
    """Parse `key = value` lines (# comments allowed) into a TrackerConfig."""
    fields = {f.name for f in dataclasses.fields(TrackerConfig)}
    values = dataclasses.asdict(base) if base is not None else {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{where}:{ln}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in fields:
            raise InvalidInputError(f"{where}:{ln}: unknown config key {key!r}")
        values[key] = _parse_value(val)
    return TrackerConfig(**values)


def load_config(path, base: TrackerConfig | None = None) -> TrackerConfig:
    """Read `key = value` lines (# comments allowed) into a TrackerConfig."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base, where=str(path))


def dump_config(cfg: TrackerConfig) -> str:
    """Inverse of parse_config_text (None-valued fields are omitted)."""
    lines = []
    for f in dataclasses.fields(TrackerConfig):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, tuple):
            text = ",".join(str(e) for e in v)
        else:
            text = str(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
