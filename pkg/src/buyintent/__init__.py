"""Purchase-intent prediction toolkit for clickstream sessions.

Pipeline stages: ingest raw event logs into labeled sessions, engineer
session features, optionally compress category counts with NMF, train
baseline (logistic regression, random forest) and deep (DBN, stacked
denoising autoencoder) classifiers, and evaluate with rank-based AUC
under k-fold or holdout protocols. A seeded synthetic generator provides
corpora with a planted, tunable buy signal.
"""

__version__ = "0.1.0"
