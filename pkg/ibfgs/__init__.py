"""Incremental BFGS solvers for the transductive SVM objective family."""
