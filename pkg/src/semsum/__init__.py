"""Text-driven, temporally aligned video summaries from precomputed embeddings."""

from .baselines import duplicate_sentence, greedy_select, ordered_subshot_dp, uniform_sample, video_mmr
from .decoders import (
    SummaryPath,
    decode,
    decode_bruteforce,
    decode_dtw,
    decode_marginal,
    decode_viterbi,
    forward,
    backward,
    forward_backward,
)
from .embedding_store import EmbeddingMatrix, compatibility_matrix, cosine_similarity, load_embeddings, save_embeddings
from .hmm_model import build_emission, is_feasible, minimal_k, topk_sets, transition_prob

__version__ = "0.1.0"
