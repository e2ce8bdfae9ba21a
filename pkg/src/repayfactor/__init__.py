"""Factor analysis of student-loan repayment rates.

Stages: ``ingest`` -> ``screening`` -> ``grouped_pca`` + ``logit_linreg``,
``elastic_net``, ``random_forest`` -> ``evaluate``; ``pipeline`` runs them
end to end and ``cli`` exposes each one as a subcommand.
"""

__version__ = "0.1.0"
