"""Shared argument handling for the experiment scripts."""
import argparse
import dataclasses
import json
from pathlib import Path


def _parse_list(kind):
    return lambda s: [kind(x) for x in s.split(",") if x]


def parse_config(cls, description, argv=None):
    """Build an instance of dataclass ``cls`` from command-line flags.

    Every field becomes ``--field-name`` with the dataclass default. Tuple
    fields take comma-separated values.
    """
    parser = argparse.ArgumentParser(description=description)
    for f in dataclasses.fields(cls):
        default = f.default
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            parser.add_argument("--" + f.name.replace("_", "-"), type=_parse_list(kind),
                                default=list(default), help=f"comma-separated (default {default})")
        else:
            parser.add_argument("--" + f.name.replace("_", "-"), type=type(default),
                                default=default, help=f"(default {default})")
    args = vars(parser.parse_args(argv))
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in args.items()})


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
