"""Run configuration and the flat ``key = value`` parameter file format."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .core import MatchParams, SmoothParams
from .localexp import OptimizerConfig

DEFAULT_CONFIG = """\
# lexstereo parameters. Lines are `key = value`; `#` starts a comment.
# Values below are the defaults used when a key is omitted.

# data term
e = 0.0001              # guided-filter regularisation (0.01^2)
tau_col = 10            # colour truncation
tau_grad = 2            # gradient truncation
alpha = 0.9             # colour/gradient balance
window_radius = 20      # 41x41 matching window
regression_radius = auto  # window_radius // 2, i.e. 21x21 regression windows

# smoothness term
lambda = 1
tau_dis = 1
eps = 0.01
gamma = 10
neighborhood = 8

# optimizer: one entry per grid level; sizes in pixels or percent of width (e.g. 1%,3%,9%)
grid_sizes = 5,15,25
k_prop = 1,2,2
k_rand = 7,0,0
k_rans = 1,1,1          # only used when ransac = true
outer_iters = 10
rn0 = 1                 # initial normal perturbation; disparity perturbation starts at disp_max/2
seed = 0
workers = 1
early_stop = none       # relative energy decrease per outer iteration below which to stop

# RANSAC proposer
ransac = false
ransac_threshold = 1
ransac_hypotheses = 32

# post-processing
post = true
lr_threshold = 1
wm_radius = 17
wm_gamma = 10
"""


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lower()] = value
    return values


def _bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(","))


def _sizes(s: str) -> tuple:
    out = []
    for x in s.split(","):
        x = x.strip()
        out.append(x if x.endswith("%") else int(x))
    return tuple(out)


def _optional_int(s: str):
    return None if s.strip().lower() in ("auto", "none", "") else int(s)


def _optional_float(s: str):
    return None if s.strip().lower() in ("none", "") else float(s)


@dataclass
class RunConfig:
    left: Path
    right: Path
    out_dir: Path
    disp_max: float
    gt: Path | None = None
    nonocc: Path | None = None
    match: MatchParams = field(default_factory=MatchParams)
    smooth: SmoothParams = field(default_factory=SmoothParams)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    post: bool = True
    ransac: bool = False
    k_rans: tuple = (1, 1, 1)
    lr_threshold: float = 1.0
    wm_radius: int = 17
    wm_gamma: float = 10.0

    def optimizer_config(self) -> OptimizerConfig:
        from dataclasses import replace

        n = len(self.optimizer.cell_sizes)
        k_rans = self.k_rans if self.ransac else (0,) * n
        if len(k_rans) == 1:
            k_rans = k_rans * n
        return replace(self.optimizer, k_rans=k_rans)


_MATCH_KEYS = {"e": ("e", float), "tau_col": ("tau_col", float), "tau_grad": ("tau_grad", float),
               "alpha": ("alpha_blend", float), "window_radius": ("window_radius", int),
               "regression_radius": ("regression_radius", _optional_int)}
_SMOOTH_KEYS = {"lambda": ("lam", float), "tau_dis": ("tau_dis", float), "eps": ("eps", float),
                "gamma": ("gamma", float), "neighborhood": ("neighborhood", int)}
_OPT_KEYS = {"grid_sizes": ("cell_sizes", _sizes), "k_prop": ("k_prop", _ints), "k_rand": ("k_rand", _ints),
             "outer_iters": ("outer_iters", int), "rn0": ("rn0", float), "seed": ("seed", int),
             "workers": ("workers", int), "early_stop": ("early_stop", _optional_float),
             "ransac_threshold": ("ransac_threshold", float), "ransac_hypotheses": ("ransac_hypotheses", int)}
_RUN_KEYS = {"post": ("post", _bool), "ransac": ("ransac", _bool), "k_rans": ("k_rans", _ints),
             "lr_threshold": ("lr_threshold", float), "wm_radius": ("wm_radius", int),
             "wm_gamma": ("wm_gamma", float)}


def build_params(values: dict[str, str]) -> dict:
    """Split parsed key/value strings into keyword dicts for each parameter group."""
    groups = {"match": {}, "smooth": {}, "optimizer": {}, "run": {}}
    tables = (("match", _MATCH_KEYS), ("smooth", _SMOOTH_KEYS), ("optimizer", _OPT_KEYS), ("run", _RUN_KEYS))
    for key, raw in values.items():
        for group, table in tables:
            if key in table:
                name, conv = table[key]
                try:
                    groups[group][name] = conv(raw)
                except ValueError as err:
                    raise ConfigError(f"bad value for {key}: {raw!r} ({err})") from err
                break
        else:
            raise ConfigError(f"unknown key {key!r}")
    return groups


def make_run_config(left, right, out_dir, disp_max, gt=None, nonocc=None, values: dict[str, str] | None = None,
                    **overrides) -> RunConfig:
    groups = build_params(parse_config_text(DEFAULT_CONFIG))
    if values:
        for group, kv in build_params(values).items():
            groups[group].update(kv)
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("seed", "workers"):
            groups["optimizer"][key] = value
        elif key in {f.name for f in fields(RunConfig)}:
            groups["run"][key] = value
        else:
            raise ConfigError(f"unknown override {key!r}")
    return RunConfig(
        left=Path(left), right=Path(right), out_dir=Path(out_dir), disp_max=float(disp_max),
        gt=Path(gt) if gt else None, nonocc=Path(nonocc) if nonocc else None,
        match=MatchParams(**groups["match"]), smooth=SmoothParams(**groups["smooth"]),
        optimizer=OptimizerConfig(**groups["optimizer"]), **groups["run"])
