"""Hand-built detection streams for exact-count tracking checks."""
import numpy as np

from rexcam.core import DetectionStreams, QuerySpec
from rexcam.profiler import TransitionRecord, build_model


def one_hot(i, dim=8):
    v = np.zeros(dim)
    v[i] = 1.0
    return v


def streams_from(sightings, n_cameras, n_frames, dim=8):
    """sightings: (camera, frame, entity) triples; entity e has feature one_hot(e)."""
    frame = [f for _, f, _ in sightings]
    camera = [c for c, _, _ in sightings]
    truth = [e for _, _, e in sightings]
    feats = np.array([one_hot(e, dim) for e in truth]) if sightings else np.zeros((0, dim))
    return DetectionStreams(frame, camera, np.arange(len(sightings)), feats, truth, n_cameras, n_frames)


def constant_corr_scenario(n_cameras=8, n_frames=200):
    """Entity 0 stays on camera 0 the whole stream; the model links camera 0 only to camera 1.

    With continuous visibility every step has gap 1, so the correlated set is
    always {0 (continuation), 1}.
    """
    streams = streams_from([(0, f, 0) for f in range(n_frames)], n_cameras, n_frames)
    model = build_model([TransitionRecord(0, 0, 1, 0, 1)], n_cameras)
    query = QuerySpec(one_hot(0), 0, 0, 0, 0)
    return streams, model, query


def line_path_scenario():
    """Entity 0 walks cameras 0 -> 1 -> 2 on a 3-camera line; entity 1 idles on camera 2 early."""
    sight = [(0, f, 0) for f in range(0, 5)] + [(1, f, 0) for f in range(15, 20)] \
        + [(2, f, 0) for f in range(32, 36)] + [(2, f, 1) for f in range(0, 6)]
    streams = streams_from(sight, 3, 80)
    history = [TransitionRecord(9, 0, 1, 0, d) for d in (9, 10, 11, 12)] \
        + [TransitionRecord(9, 1, 2, 0, d) for d in (11, 12, 13, 14)] \
        + [TransitionRecord(9, 2, -1, 0, None)]
    model = build_model(history, 3)
    query = QuerySpec(one_hot(0), 0, 0, 0, 0)
    return streams, model, query
