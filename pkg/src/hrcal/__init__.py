"""Post-calibration toolkit for wrist-device heart-rate streams.

Reference heart rate is extracted from ECG, activity and personal
features are engineered and statistically selected, regression models are
tuned and scored under leave-one-subject-out folds, and agreement
statistics are reported.  A seeded synthetic-cohort generator makes the
whole pipeline runnable end to end.
"""

__version__ = "0.1.0"
