class LabError(Exception):
    """Base class for every error raised by the lab packages."""

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message
