class SkelfitException(Exception):
    """Base exception for all skelfit errors."""
    def __init__(self, message=None, error_code=None):
        self.error_code = error_code
        if message is None:
            message = "skelfit error occurred"
        super().__init__(message)


class ValidationException(SkelfitException):
    """Input did not satisfy a documented precondition. The CLI exits with status 1."""
    def __init__(self, message=None, error_code="VALIDATION_ERROR"):
        super().__init__(message or "Validation failed", error_code=error_code)


class InvalidInputException(ValidationException):
    """Precondition violation on a domain value."""
    def __init__(self, message=None, field=None):
        self.field = field
        if message is None:
            message = f"Invalid input{f' at {field}' if field else ''}"
        elif field:
            message = f"{field}: {message}"
        super().__init__(message, error_code="INVALID_INPUT")


class SchemaException(ValidationException):
    """Malformed shape, manifest or config document."""
    def __init__(self, message=None, field=None):
        self.field = field
        if message is None:
            message = "Schema violation"
        if field:
            message = f"{field}: {message}"
        super().__init__(message, error_code="SCHEMA_ERROR")


class FileFormatException(ValidationException):
    """Bad magic number or header in a binary file."""
    def __init__(self, message=None, path=None):
        self.path = path
        if message is None:
            message = "Unrecognized file format"
        if path:
            message = f"{path}: {message}"
        super().__init__(message, error_code="FORMAT_ERROR")


class ConfigurationException(ValidationException):
    """A runtime setting (environment or settings/*.properties) has an unusable value."""
    def __init__(self, message=None):
        super().__init__(message or "Configuration error occurred", error_code="CONFIG_ERROR")


class DivergenceException(SkelfitException):
    """Non-finite energy or gradient."""
    def __init__(self, message=None, term=None):
        self.term = term
        if message is None:
            message = f"Non-finite value{f' in {term}' if term else ''}"
        super().__init__(message, error_code="DIVERGENCE")


class RetrievalException(SkelfitException):
    def __init__(self, message=None):
        super().__init__(message or "Retrieval failed", error_code="RETRIEVAL_ERROR")


class FitException(SkelfitException):
    def __init__(self, message=None):
        super().__init__(message or "Fitting failed", error_code="FIT_ERROR")


class MetricException(SkelfitException):
    def __init__(self, message=None):
        super().__init__(message or "Metric evaluation failed", error_code="METRIC_ERROR")


class WorkbenchException(SkelfitException):
    """I/O failure while reading or writing workbench files."""
    def __init__(self, message=None):
        super().__init__(message or "Workbench I/O failed", error_code="WORKBENCH_ERROR")


class ReportGenerationException(SkelfitException):
    """Exception for report generation failures."""
    def __init__(self, message=None):
        super().__init__(message or "Report generation failed", error_code="REPORT_ERROR")


class RunnerException(SkelfitException):
    """Exception for batch runner errors."""
    def __init__(self, message=None):
        super().__init__(message or "Batch runner error occurred", error_code="RUNNER_ERROR")
