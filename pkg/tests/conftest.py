import numpy as np
import pytest

from fla import (
    FitConfig,
    WindowSpec,
    accumulate_symbol_sequences,
    demo_scene_spec,
    finalize,
    fit,
    fit_quantizers,
    generate_scene,
    inject_glitches,
    quantize,
    stop_query_scene_spec,
)


class ScenePipeline:
    """A generated scene carried through quantize/accumulate/fit."""

    def __init__(self, spec, trackset, labels, seed=0):
        self.spec = spec
        self.trackset = trackset
        self.labels = labels
        self.counts = spec.planted_class_counts()
        self.quantizers = fit_quantizers(trackset)
        self.seqs = quantize(trackset, self.quantizers)
        self.window = WindowSpec.from_seconds(1.0, spec.frame_rate)
        self.joints = finalize(accumulate_symbol_sequences(self.seqs, self.window))
        self.model, self.trace = fit(
            self.joints, self.counts, FitConfig(seed=seed), self.quantizers
        )


@pytest.fixture(scope="session")
def demo_clean():
    spec = demo_scene_spec()
    trackset, labels = generate_scene(spec)
    return ScenePipeline(spec, trackset, labels)


@pytest.fixture(scope="session")
def demo_glitched():
    spec = demo_scene_spec()
    clean, labels = generate_scene(spec)
    glitched = inject_glitches(clean, rate=0.05, magnitude=1.0, seed=3)
    return ScenePipeline(spec, glitched, labels)


@pytest.fixture(scope="session")
def stop_scene():
    spec = stop_query_scene_spec()
    trackset, labels = generate_scene(spec)
    return ScenePipeline(spec, trackset, labels)


@pytest.fixture(scope="session")
def tiny_scene():
    spec = demo_scene_spec(track_count=25, mean_track_length=60, seed=5)
    trackset, labels = generate_scene(spec)
    return spec, trackset, labels


def random_symbol_joints(seed, alphabet_sizes=(5, 6, 4), n_tracks=8, spec=None):
    """Random symbol tracks accumulated into a valid PairwiseJointSet."""
    from fla.quantize import SymbolSequences

    rng = np.random.default_rng(seed)
    names = tuple(f"f{i}" for i in range(len(alphabet_sizes)))
    seqs = SymbolSequences(
        [f"s{i}" for i in range(n_tracks)],
        [
            rng.integers(0, alphabet_sizes, size=(int(rng.integers(5, 40)), len(alphabet_sizes)))
            for _ in range(n_tracks)
        ],
        names,
        alphabet_sizes,
    )
    spec = spec or WindowSpec(half_width=2, sigma=1.0)
    return finalize(accumulate_symbol_sequences(seqs, spec)), seqs
