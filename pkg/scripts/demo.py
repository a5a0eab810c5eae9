import logging
import tempfile
from pathlib import Path

from tube_teller.config import RunConfig
from tube_teller.metrics import dice, mean_centerline_error
from tube_teller.solver import apply_classifier, backtrace_full
from tube_teller.synth import SceneSpec, generate_scene, save_scene
from tube_teller.training import iterative_train


def make_scenes(seeds):
    return [generate_scene(SceneSpec(width=96, height=96, seed=seed)) for seed in seeds]


def train(config: RunConfig, run_dir: Path):
    train_scenes = [scene.to_training() for scene in make_scenes(range(6))]
    val_scenes = [scene.to_training() for scene in make_scenes(range(100, 102))]

    # Writes every iteration's model plus metrics.jsonl into run_dir.
    model, run = iterative_train(train_scenes, val_scenes, config.train_config(), run_dir)
    print(run.to_frame())
    return model


def evaluate(model, config: RunConfig, out_dir: Path) -> None:
    scene = make_scenes([1000])[0]
    save_scene(scene, out_dir / "test-scene")

    start, end = scene.endpoints[0]
    pred, mask = apply_classifier(scene.image, start, model, config.inference_params())
    path = backtrace_full(pred, end)

    print("dice:", dice(mask, scene.mask).value)
    print("centerline error:", mean_centerline_error([path], scene.gt_points).value)


logging.basicConfig(level=logging.INFO)
config = RunConfig(patch_width=15, trace_length=15, max_iterations=3)
work_dir = Path(tempfile.mkdtemp(prefix="tube-teller-"))
model = train(config, work_dir / "run")
evaluate(model, config, work_dir)
print("Results in", work_dir)
