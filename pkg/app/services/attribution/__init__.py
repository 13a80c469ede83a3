# Class activation maps and map post-processing