# Pydantic schemas for configs, manifests and reports
