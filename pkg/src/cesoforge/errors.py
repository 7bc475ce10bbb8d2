"""Exception hierarchy shared by all cesoforge modules."""


class CesoForgeError(Exception):
    """Base class; CLI maps these to exit code 1, the service to 4xx/5xx."""


# --- ontology model ---------------------------------------------------------

class InvalidProperty(CesoForgeError):
    pass


class MissingMandatoryExtension(CesoForgeError):
    pass


class UnknownEndpoint(CesoForgeError):
    pass


class IllegalTriple(CesoForgeError):
    pass


class MalformedBundle(CesoForgeError):
    pass


class InvariantViolation(CesoForgeError):
    def __init__(self, message: str, object_id: str | None = None):
        super().__init__(f"{object_id}: {message}" if object_id else message)
        self.object_id = object_id


# --- store / corpus ---------------------------------------------------------

class StorageFailure(CesoForgeError):
    pass


class ValidationError(CesoForgeError):
    pass


class FetchFailure(CesoForgeError):
    pass


class ParseFailure(CesoForgeError):
    pass


# --- tagging ----------------------------------------------------------------

class BadSpan(CesoForgeError):
    pass


class UnknownCategory(CesoForgeError):
    pass


# --- agreement --------------------------------------------------------------

class LengthMismatch(CesoForgeError):
    pass


class UnknownLabel(CesoForgeError):
    pass


class DegenerateAgreement(CesoForgeError):
    pass


# --- incident generation ----------------------------------------------------

class ImmatureSource(CesoForgeError):
    pass


class NoCandidates(CesoForgeError):
    pass


# --- APT enhancement --------------------------------------------------------

class UnknownFragmentId(CesoForgeError):
    pass


class EmptySelection(CesoForgeError):
    pass


# --- trends -----------------------------------------------------------------

class SeriesTooShort(CesoForgeError):
    pass


# --- scenario assembly ------------------------------------------------------

class UnresolvedIncident(CesoForgeError):
    pass


class ValidationFailure(CesoForgeError):
    pass


class NotAScenarioGraph(CesoForgeError):
    pass


class AdapterUnavailable(CesoForgeError):
    pass


class IoFailure(CesoForgeError):
    pass


# --- service ----------------------------------------------------------------

class ConflictError(CesoForgeError):
    pass


class NotFoundError(CesoForgeError):
    pass
