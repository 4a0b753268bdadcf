"""EHR summarization pipeline: targeted FHIR retrieval, normalization into a
clinical context package, evidence-grounded structured summaries, and an
evaluation harness."""

__version__ = "0.1.0"
