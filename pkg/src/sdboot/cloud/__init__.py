from sdboot.cloud.api import CloudApi, json_response, error_response
from sdboot.cloud.service import (
    AuthLogEntry,
    BadRange,
    BadTemplate,
    CloudError,
    CloudService,
    DuplicateName,
    DuplicateUser,
    EmptyFile,
    NoSuchOs,
    NoSuchUser,
    NotFound,
    OsDefinition,
    StoredFile,
    UserRecord,
    Validation,
    derive_os_id,
)
from sdboot.cloud.store import Store, StoreCorruption

__all__ = [
    "AuthLogEntry",
    "BadRange",
    "BadTemplate",
    "CloudApi",
    "CloudError",
    "CloudService",
    "DuplicateName",
    "DuplicateUser",
    "EmptyFile",
    "NoSuchOs",
    "NoSuchUser",
    "NotFound",
    "OsDefinition",
    "Store",
    "StoreCorruption",
    "StoredFile",
    "UserRecord",
    "Validation",
    "derive_os_id",
    "error_response",
    "json_response",
]
