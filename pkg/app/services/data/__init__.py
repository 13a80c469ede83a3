# Synthetic scenes and file formats