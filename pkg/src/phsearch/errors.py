"""Exception types shared across the package.

Every error carries a machine-readable ``code`` used verbatim by the CLI
(stderr JSON) and the HTTP service (error payloads).
"""


class PhsError(Exception):
    code = "error"


class DimensionMismatch(PhsError):
    code = "dimension_mismatch"


class BadGeometry(PhsError):
    code = "bad_geometry"


class BadPrompt(PhsError):
    code = "bad_prompt"


class BadParam(PhsError):
    code = "bad_param"


class EmptyMaskError(PhsError):
    code = "empty_mask"


class EmptyStoreError(PhsError):
    code = "empty_store"


class MissingCacheError(PhsError):
    code = "missing_cache"


class FormatError(PhsError):
    code = "format_error"


class FingerprintMismatch(PhsError):
    code = "fingerprint_mismatch"


class UnknownImageError(PhsError):
    code = "unknown_image"


class EmptyEvaluationError(PhsError):
    code = "empty_evaluation"


class IndexBuildError(PhsError):
    code = "index_build_error"
