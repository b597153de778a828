import numpy as np
import pytest

from pluralfill import pipeline
from pluralfill.configs import micro_config


class MicroRun:
    """A fully trained micro-scale pipeline shared across test modules."""

    def __init__(self, root):
        self.ckpt = str(root / "run")
        self.cfg = micro_config(out_dir=self.ckpt)
        self.cfg_path = str(root / "micro.json")
        self.cfg.save(self.cfg_path)
        self.logs = pipeline.train(self.cfg, self.ckpt, "all")
        self.bundle = pipeline.load_bundle(self.ckpt, self.cfg)

    def test_image(self, i: int = 0) -> np.ndarray:
        from pluralfill.data import gen_synthetic_dataset

        return gen_synthetic_dataset(self.cfg.data).test[i]


@pytest.fixture(scope="session")
def micro_run(tmp_path_factory) -> MicroRun:
    return MicroRun(tmp_path_factory.mktemp("micro_run"))
