"""Regenerate the checked-in config files with all defaults materialized."""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from pluralfill.configs import micro_config, toy_config  # noqa: E402

out = pathlib.Path(__file__).resolve().parents[1] / "configs"
out.mkdir(exist_ok=True)
toy_config().save(out / "toy.json")
micro_config().save(out / "micro.json")
print(f"wrote {out / 'toy.json'} and {out / 'micro.json'}")
