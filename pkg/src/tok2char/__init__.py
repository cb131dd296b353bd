"""Character-level language models from token-level ones.

A token-level model defines a distribution over token strings; decoding
turns it into a distribution over byte strings.  This package computes the
prefix probabilities, next-character distributions and conditional samples
of that byte-level distribution, exactly or with beam approximations.
"""

from .beam import (
    BeamState,
    Bundle,
    beam,
    build_trie,
    bundle_extend,
    bundle_filter,
    next_char_dist_bundled,
    unbundle,
    unbundle_beam,
)
from .bench import BenchResult, jsd, run_bench
from .bounds import (
    BoundReport,
    cover_bound_table,
    fertility,
    lower_bound_construction,
    munch,
    verify_bound,
)
from .charlm import (
    CharLM,
    Mode,
    cond_prefix_prob,
    eos_prob,
    generate_chars,
    next_char_dist,
    next_char_dist_slow,
)
from .covering import (
    CoverItem,
    CoverState,
    char_full_prob,
    char_prefix_prob,
    count_cover,
    encodings,
    enumerate_cover,
    prune_nothing,
    prune_top_K_buckets,
)
from .distributions import EOS, NextCharDistribution, NextTokenDistribution
from .errors import (
    DeadEnd,
    ErasingVocabulary,
    HealingFailed,
    InvalidDistribution,
    InvalidToken,
    LMFormatError,
    OracleRequiresCap,
    Tok2CharError,
    UndefinedConditional,
    UnencodableByte,
    VocabFormatError,
)
from .generation import (
    CoverCategorical,
    conditional_token_generation,
    rejection_oracle,
    sample_completion,
    token_healing,
)
from .lm import (
    CappedLM,
    StdioLM,
    TableLM,
    TokenLM,
    brute_force_char_prefix,
    full_prob_tokens,
    prefix_prob_tokens,
)
from .trie import EOT, ProbabilityTrie, VocabTrie
from .vocab import Vocabulary, decode, greedy_encode, is_strict_prefix_monotone, load_gpt2_vocab

__version__ = "0.1.0"
