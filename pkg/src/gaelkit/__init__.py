"""gaelkit: bilingual English-Irish corpus preparation and evaluation toolkit.

Subsystems: corpus ingestion and manifests, n-gram containment reporting,
token packing for continued pre-training, LLM-backed dataset synthesis,
a pairwise comparison arena with an annotation service, and the ranking
and agreement statistics used to act on the collected annotations.
"""

__version__ = "0.1.0"
