"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment.  Command-line flags
``--key value`` override file entries.  Recognised keys and defaults:

=============  ==========================================================
kernel         kernel string, e.g. ``poisson2d`` or ``yukawa3d:lambda=2``
L              half-width of the base box (16)
N              points per axis, even (128 in 2D, 64 in 3D)
S              expansion factor or comma list (1)
m              matching order or comma list (2)
sigma          auxiliary Gaussian width (2)
method         method or comma list (fs-mm)
density        ``gaussian``, ``bump`` or ``file:PATH`` (a field dump)
x0             Gaussian center, comma list (1,2[,3])
s              Gaussian width parameter, rho = A exp(-|x-x0|^2/(2 s^2)) (sqrt 2)
A              Gaussian amplitude (1)
bump_center    bump center (origin)
bump_radius    bump radius (1)
centered       center the auxiliary Gaussian at the centroid (false)
output         output path stem; stdout when empty
repeats        timing repetitions after one warm-up (5)
max_error      exit with status 3 if the oracle error exceeds this (off)
seed           seed for randomized checks (0)
=============  ==========================================================
"""

import math

DEFAULTS = {
    "kernel": "poisson2d",
    "L": "16",
    "N": "",
    "S": "1",
    "m": "2",
    "sigma": "2",
    "method": "fs-mm",
    "density": "gaussian",
    "x0": "",
    "s": repr(math.sqrt(2.0)),
    "A": "1",
    "bump_center": "",
    "bump_radius": "1",
    "centered": "false",
    "output": "",
    "repeats": "5",
    "max_error": "",
    "seed": "0",
}


class ConfigError(ValueError):
    pass


def parse_text(text, source="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        if not eq:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = val.strip()
    return out


def load(path=None, overrides=None):
    cfg = dict(DEFAULTS)
    if path:
        try:
            with open(path) as fh:
                cfg.update(parse_text(fh.read(), path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for key, val in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown option --{key}")
        cfg[key] = val
    return cfg


def as_int_list(text, name):
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{name} must be an integer or comma list, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{name} is empty")
    return vals


def as_float(text, name):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {text!r}") from None


def as_vec(text, name):
    try:
        return tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise ConfigError(f"{name} must be a comma list of numbers, got {text!r}") from None


def as_bool(text, name):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"{name} must be true or false, got {text!r}")


def render(cfg):
    """One-line form used in CSV/JSON headers."""
    return " ".join(f"{k}={cfg[k]}" for k in sorted(cfg))
