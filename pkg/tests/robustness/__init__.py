# robustness tests package
