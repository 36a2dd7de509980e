void deepmatch_bindings_placeholder(){}
