"""Plain-text key=value run configuration.

Grammar: optional section headers in brackets, `key = value` lines, `#`
comments and blank lines.  Unknown sections or keys are rejected so typos
cannot silently fall back to defaults.
"""

import copy

DEFAULTS = {
    "scenes": {
        "train_scenes": 8,
        "test_scenes": 3,
        "train_duration": 20.0,
        "test_duration": 10.0,
        "max_interferers": 2,
        "noise_db": -25.0,
        "seed": 0,
    },
    "features": {
        "window": 256,
        "hop": 16,
    },
    "dataset": {
        "m": 20,
        "stride": 1,
        "val_fraction": 0.25,
        "seed": 0,
    },
    "train": {
        "epochs": 50,
        "batch_size": 128,
        "learning_rate": 1e-3,
        "optimizer": "adam",
        "dropout_rate": 0.2,
        "synaptic_noise_std": 0.05,
        "patience": 10,
        "max_batches_per_epoch": 0,
        "seed": 0,
    },
    "grid": {
        "kinds": "fnn_nos,fnn_smo,fnn_seq,rnn,lstm,gru",
        "layers": "1,2,3,4,5,6",
        "neurons": "1,2,4,8,16,32",
        "jobs": 1,
        "timing": 1,
    },
}


class ConfigError(ValueError):
    pass


def _convert(section, key, raw):
    ref = DEFAULTS[section][key]
    try:
        if isinstance(ref, int):
            return int(raw)
        if isinstance(ref, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    return raw


def parse_config(text):
    """Parse config text into a nested dict over the known sections/keys."""
    cfg = copy.deepcopy(DEFAULTS)
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in DEFAULTS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (p.strip() for p in line.split("=", 1))
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        if key not in DEFAULTS[section]:
            raise ConfigError(f"line {lineno}: unknown key {section}.{key}")
        cfg[section][key] = _convert(section, key, raw)
    return cfg


def load_config(path=None):
    if path is None:
        return copy.deepcopy(DEFAULTS)
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg):
    lines = []
    for section in DEFAULTS:
        lines.append(f"[{section}]")
        for key in DEFAULTS[section]:
            lines.append(f"{key} = {cfg[section][key]}")
        lines.append("")
    return "\n".join(lines)
