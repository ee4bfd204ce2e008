"""Exception taxonomy shared across the package.

Exit-code mapping for the CLI lives here so every command agrees:
config problems exit 2, backend failures exit 3, validation and data
problems exit 4.
"""


class SceneSmithError(Exception):
    """Base class for everything raised on purpose."""

    exit_code = 1


class ConfigError(SceneSmithError):
    """Bad or missing configuration (unknown keys, wrong types, bad paths)."""

    exit_code = 2


class BackendError(SceneSmithError):
    """Base for failures talking to model backends."""

    exit_code = 3


class BackendUnavailable(BackendError):
    """Backend could not be reached after all retries."""


class ProtocolError(BackendError):
    """Backend answered with something that does not match the wire contract."""


class EmptyCompletion(BackendError):
    """Text backend returned an empty or whitespace-only completion."""


class ValidationError(SceneSmithError):
    """Base for data and precondition failures."""

    exit_code = 4


class PreconditionError(ValidationError):
    """Caller violated a documented argument contract."""


class ManifestParseError(ValidationError):
    """Manifest document is structurally unreadable.

    ``field`` names the offending key when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class LayoutParseError(ValidationError):
    """Layout response text could not be parsed.

    ``offset`` is the character position where parsing gave up.
    """

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class UnknownObject(ValidationError):
    """Layout mentions a label that matches no concept in the composition."""


class IncompleteLayout(ValidationError):
    """Layout response covers only a subset of the requested concepts."""


class IncompleteScales(ValidationError):
    """Scale response covers only a subset of the requested concepts."""


class ScaleOutOfRange(ValidationError):
    """Scale ratio fell outside (0, 1]."""


class BackgroundParseError(ValidationError):
    """Background-prompt response line could not be split into prompts."""


class EmptySegmentation(ValidationError):
    """Segmentation mask has no foreground pixels at the working threshold."""


class NoBackgroundAvailable(ValidationError):
    """No background image matches the requested prompt."""


class EmptyCorpus(ValidationError):
    """Statistics requested over zero captions."""


class EmptyReportSet(ValidationError):
    """Aggregation requested over zero per-sample reports."""


class StageOrderError(ValidationError):
    """Pipeline stage invoked before the stages it depends on."""


class NotFound(ValidationError):
    """Requested entity id does not exist."""


class IncompleteReview(ValidationError):
    """Finalize requested while unranked samples remain."""


class NotFinalized(ValidationError):
    """Export requested before curation finalize."""


class EmptyBundle(ValidationError):
    """Export would produce zero training items."""
