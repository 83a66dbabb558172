"""MMR-guided pointer-generator summarization for multi-document input.

The pipeline: build a chronological mega-document per topic (`corpus`),
score sentence importance (`salience`), and decode with the trained
encoder-decoder (`neural`) while a selection controller (`controller`)
keeps attention on the top-scored sentences and refreshes redundancy at
every sentence boundary. `metrics` provides the overlap scores,
`evaluation` the reports, and `cli` the command-line front end.
"""

from mmrsum.controller import (
    CopyAbstractor,
    MmrConfig,
    PointerGeneratorAbstractor,
    SummarizeResult,
    pg_mmr_summarize,
    write_trace,
)
from mmrsum.corpus import Topic, build_megadoc, load_topics, synth_fusion_corpus
from mmrsum.errors import DataError, MmrsumError, NumericalError
from mmrsum.evaluation import evaluate, extractiveness_report, content_location_report
from mmrsum.neural import HyperParams, train_sds
from mmrsum.salience import compute_importance, train_importance

__all__ = [
    "CopyAbstractor",
    "DataError",
    "HyperParams",
    "MmrConfig",
    "MmrsumError",
    "NumericalError",
    "PointerGeneratorAbstractor",
    "SummarizeResult",
    "Topic",
    "build_megadoc",
    "compute_importance",
    "content_location_report",
    "evaluate",
    "extractiveness_report",
    "load_topics",
    "pg_mmr_summarize",
    "synth_fusion_corpus",
    "train_importance",
    "train_sds",
    "write_trace",
]
