"""Train the toy pipeline end to end, then evaluate and benchmark it.

Roughly five minutes on one CPU.  Artifacts land in runs/toy/.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from pluralfill import cli  # noqa: E402

ROOT = pathlib.Path(__file__).resolve().parents[1]
CFG = str(ROOT / "configs" / "toy.json")

if __name__ == "__main__":
    ckpt = str(ROOT / "runs" / "toy")
    sys.exit(
        cli.main(["train", "--stage", "all", "--config", CFG, "--ckpt", ckpt])
        or cli.main(["eval", "--config", CFG, "--ckpt", ckpt,
                     "--buckets", "20-30,30-40,40-50"])
        or cli.main(["bench-sampling", "--config", CFG, "--ckpt", ckpt]))
