from kegnnflow.compliance.compliance import clause_compliance, compliance_by_class, format_compliance

__all__ = ["clause_compliance", "compliance_by_class", "format_compliance"]
