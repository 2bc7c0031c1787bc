import numpy as np
import pytest
from PIL import Image

from attnextract import ExtractionConfig, VggAttentionExtractor


@pytest.fixture(scope="session")
def extractor():
    # random weights: pretrained checkpoints are not fetchable in offline CI,
    # and every pipeline property under test is weight-agnostic
    return VggAttentionExtractor(ExtractionConfig(weights="random", seed=3))


@pytest.fixture(scope="session")
def textured_image():
    rng = np.random.default_rng(0)
    return (rng.random((224, 224, 3)) * 255).astype(np.uint8)


@pytest.fixture(scope="session")
def tum_sequence(tmp_path_factory):
    """Minimal TUM-layout sequence: rgb/ + rgb.txt + groundtruth.txt."""
    root = tmp_path_factory.mktemp("tum_seq")
    (root / "rgb").mkdir()
    rng = np.random.default_rng(1)
    lines = ["# color images", "# timestamp filename"]
    for i in range(3):
        ts = 1305031100.0 + 0.25 * i
        name = f"rgb/{ts:.6f}.png"
        img = Image.fromarray((rng.random((48, 64, 3)) * 255).astype(np.uint8))
        img.save(root / name)
        lines.append(f"{ts:.6f} {name}")
    (root / "rgb.txt").write_text("\n".join(lines) + "\n")
    (root / "groundtruth.txt").write_text(
        "# ground truth trajectory\n"
        "1305031100.00 0.1 0.2 0.3 0 0 0 1\n"
        "1305031100.25 0.2 0.2 0.3 0 0 0 1\n"
        "1305031100.50 0.3 0.2 0.3 0 0 0 1\n"
    )
    return root
