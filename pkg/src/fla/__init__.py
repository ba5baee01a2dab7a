"""Factored latent analysis of tracked-object observations.

Builds per-feature latent class models for track observations (size,
speed, direction, position) from windowed pairwise co-occurrence
statistics, then classifies, segments, and queries track sequences.
"""

__version__ = "0.1.0"

from .errors import CapacityError, FlaError, ParseError, QueryError, ValidationError
from .tracks import (
    FEATURES,
    ObservationVector,
    Track,
    TrackSet,
    normalize_min_max,
    parse_track_records,
    write_track_records,
)
from .scenes import (
    Archetype,
    GroundTruthLabels,
    SceneSpec,
    demo_scene_spec,
    generate_scene,
    inject_glitches,
    parse_labels,
    stop_query_scene_spec,
    write_labels,
)
from .quantize import (
    BinSpec,
    QuantizerSet,
    SymbolSequences,
    fit_grid_bins,
    fit_quantizers,
    fit_uniform_bins,
    quantize,
)
from .cooccur import (
    CooccurrenceAccumulator,
    PairwiseJointSet,
    WindowSpec,
    accumulate_symbol_sequences,
    finalize,
    merge,
    window_joint,
    window_positions,
)
from .em import (
    FitConfig,
    FitTrace,
    FlaModel,
    em_iterate,
    fit,
    init_anchors,
    init_model,
    model_pairwise_joint,
    objective,
    type_marginals,
)
from .full_joint import (
    FullJointModel,
    WindowSampleSet,
    collect_window_samples,
    enumerate_tuple_count,
    fit_full_joint,
    induced_pairwise,
    pairwise_from_samples,
    to_pairwise_model,
)
from .classify import (
    PosteriorSequence,
    Segment,
    SegmentSet,
    argmax_labels,
    build_segments,
    instantaneous_posteriors,
    parse_segments,
    smooth_posteriors,
    write_segments,
)
from .queries import QueryMatch, QueryPredicate, evaluate_query
from .modelio import ModelBundle, load_model, save_model
from .manifest import RunManifest
