"""Cohort growth companion: data ingestion, SOAP-subset service, offline sync, analytics."""

from . import analytics, cohort, service, soapwire, sync

__all__ = ["analytics", "cohort", "service", "soapwire", "sync"]
