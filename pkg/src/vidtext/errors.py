"""Exception types shared across the package.

Argument-shape problems raise plain ``ValueError``; everything that names a
domain failure mode gets its own class so callers (and the HTTP layer) can
map them to config errors vs. runtime errors.
"""


class VidTextError(Exception):
    """Base class for all package-specific errors."""


class InvalidSpecError(VidTextError):
    """A scene description violates its invariants (e.g. object leaves canvas)."""


class InvalidConfigError(VidTextError):
    """A corpus or run configuration is malformed or fails schema validation."""


class VocabularyError(VidTextError):
    """A word is not covered by the vocabulary."""


class UnsupportedTargetError(VidTextError):
    """A target kind cannot be extracted from the given inputs."""


class DegenerateCodebookError(VidTextError):
    """Codebook construction cannot produce K distinct centroids."""


class InvalidTeacherError(VidTextError):
    """A teacher's output grid does not map 1:1 onto the patch grid."""


class DegenerateTargetError(VidTextError):
    """Target normalization is undefined (zero variance feature vector)."""


class InvalidInstanceError(VidTextError):
    """A downstream task instance is malformed (e.g. missing [MASK] slot)."""


class CheckpointError(VidTextError):
    """A checkpoint is unreadable or incompatible with the requested config."""
