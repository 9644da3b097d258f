"""Black-box robustness audits over HTTP prediction endpoints."""
from .client import (
    EndpointClient,
    EndpointConfig,
    ItemError,
    RemoteClassifier,
    TokenBucket,
    payload_key,
    query_predictions,
)
from .groups import AuditGroup, AuditSample, GroupReport, GroupResult, audit_groups
from .mock import MockServer
