from .corpus import (
    Corpus,
    CorpusConfig,
    build_corpus,
    load_clip,
    load_corpus_manifest,
    save_clip,
    save_corpus,
)
from .sampling import FrameSample, even_indices, sample_frames
from .scene import (
    BACKGROUND_8BIT,
    BACKGROUND_DEPTH,
    PALETTE,
    AnnotatedClip,
    ObjectSpec,
    SceneSpec,
    caption_for_scene,
    generate_clip,
    object_mask,
    random_scene,
)
from .text import (
    ANSWER_TOKENS,
    BLANK,
    CLS,
    MASK,
    PAD,
    SEP,
    SPECIAL_TOKENS,
    Vocabulary,
    detokenize,
    tokenize,
)

__all__ = [
    "AnnotatedClip",
    "ANSWER_TOKENS",
    "BACKGROUND_8BIT",
    "BACKGROUND_DEPTH",
    "BLANK",
    "CLS",
    "Corpus",
    "CorpusConfig",
    "FrameSample",
    "MASK",
    "ObjectSpec",
    "PAD",
    "PALETTE",
    "SEP",
    "SPECIAL_TOKENS",
    "SceneSpec",
    "Vocabulary",
    "build_corpus",
    "caption_for_scene",
    "detokenize",
    "even_indices",
    "generate_clip",
    "load_clip",
    "load_corpus_manifest",
    "object_mask",
    "random_scene",
    "sample_frames",
    "save_clip",
    "save_corpus",
    "tokenize",
]
