import numpy as np
import pytest

# Pass/fail lines recorded by the acceptance criteria; echoed after the run
# so they stay visible under output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from dualscreen.synth import SceneConfig, generate_dataset, generate_scene
from dualscreen.types import (
    Annotation,
    AnomalyLabel,
    BoundingBox,
    ImageRecord,
    ObjectClass,
)


def make_record(
    rec_id="img0",
    width=40,
    height=30,
    boxes=((2.0, 3.0, 10.0, 12.0),),
    classes=None,
    anomalies=None,
    fill=0.5,
):
    classes = classes or [ObjectClass.BOTTLE] * len(boxes)
    anomalies = anomalies or [AnomalyLabel.BENIGN] * len(boxes)
    annotations = [
        Annotation(bbox=BoundingBox(*b), object_class=c, anomaly=a)
        for b, c, a in zip(boxes, classes, anomalies)
    ]
    pixels = np.full((height, width, 3), fill, dtype=np.float32)
    return ImageRecord(id=rec_id, width=width, height=height, pixels=pixels, annotations=annotations)


@pytest.fixture(scope="session")
def tiny_scenes():
    cfg = SceneConfig(seed=11)
    return [generate_scene(cfg, i) for i in range(8)]


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tinyds")
    generate_dataset(SceneConfig(seed=11), 8, out)
    return out
