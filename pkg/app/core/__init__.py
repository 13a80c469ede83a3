# Core configuration, errors, tensor engine and utilities
