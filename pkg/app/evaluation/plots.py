"""
Scene plots as SVG: lane centerlines gray dashed, past tracks green, ground
truth blue, predicted samples red.
"""
from pathlib import Path
from typing import List, Optional, Sequence, Union

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.lines import Line2D  # noqa: E402

from app.ingestion.scene_synth import Scene  # noqa: E402
from app.model.prediction import PredictionSet  # noqa: E402

LANE_STYLE = {"color": "0.6", "linestyle": "--", "linewidth": 1.0}
PAST_STYLE = {"color": "green", "linewidth": 2.0, "marker": "o", "markersize": 3}
GT_STYLE = {"color": "blue", "linewidth": 2.0}
SAMPLE_STYLE = {"color": "red", "linewidth": 1.0, "alpha": 0.6}

# Fixed ids and no timestamp keep the SVG bytes stable across runs.
plt.rcParams["svg.hashsalt"] = "lanefrm"


def plot_scene(
    scene: Scene,
    path: Union[str, Path],
    prediction: Optional[PredictionSet] = None,
    title: Optional[str] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(1, 1, figsize=(8, 8))

    for segment in scene.graph.segments:
        points = segment.points
        ax.plot(points[:, 0], points[:, 1], **LANE_STYLE)

    for index, agent in enumerate(scene.agents):
        ax.plot(agent.past[:, 0], agent.past[:, 1], **PAST_STYLE)
        gt = np.concatenate([agent.current_position[None], agent.future])
        ax.plot(gt[:, 0], gt[:, 1], **GT_STYLE)
        if prediction is not None:
            for sample in prediction.for_agent(index):
                track = np.concatenate([agent.current_position[None], sample])
                ax.plot(track[:, 0], track[:, 1], **SAMPLE_STYLE)
        ax.annotate(str(agent.agent_id), agent.current_position, fontsize=8)

    legend = [
        Line2D([0], [0], label="lanes", **LANE_STYLE),
        Line2D([0], [0], label="past", **PAST_STYLE),
        Line2D([0], [0], label="ground truth", **GT_STYLE),
    ]
    if prediction is not None:
        legend.append(Line2D([0], [0], label=f"samples (F={prediction.num_samples})", **SAMPLE_STYLE))
    ax.legend(handles=legend, loc="upper right")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(title or f"{scene.scenario_kind.value} seed {scene.seed} ({scene.interaction_mode.value})")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")

    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_scenes(
    scenes: Sequence[Scene],
    out_dir: Union[str, Path],
    predictions: Optional[Sequence[PredictionSet]] = None,
) -> List[Path]:
    """One ``scene_<seed>.svg`` per scene; predictions are matched by scene seed."""
    out_dir = Path(out_dir)
    by_seed = {p.scene_seed: p for p in predictions or []}
    return [plot_scene(scene, out_dir / f"scene_{scene.seed}.svg", by_seed.get(scene.seed)) for scene in scenes]
