# Lee-type bounds for random-object outcomes
