"""Downstream evaluation: embeddings, top-M retrieval, CMP and CPP."""

from .cmp import CmpDataset, CmpResult, build_cmp_dataset, recall_at_m, run_cmp
from .cpp import CppResult, ProfileClassifier, train_cpp_classifier
from .export import export_embeddings, relative_improvement, write_results
from .index import CandidateIndex, top_m_retrieve
from .inference import InferenceResult, infer_embeddings

__all__ = [
    "infer_embeddings",
    "InferenceResult",
    "CandidateIndex",
    "top_m_retrieve",
    "CmpDataset",
    "CmpResult",
    "build_cmp_dataset",
    "recall_at_m",
    "run_cmp",
    "CppResult",
    "ProfileClassifier",
    "train_cpp_classifier",
    "export_embeddings",
    "write_results",
    "relative_improvement",
]
