"""Desk-assessment toolkit for explosive-hazard risk mapping.

Geodesy and spatial indexing, sampling with hard negatives, nearest-hub
feature engineering, a family of classifiers (logistic regression, random
forest, gradient boosting, feed-forward and graph convolutional networks),
evaluation, risk banding and a synthetic world generator.
"""

__version__ = "0.1.0"
