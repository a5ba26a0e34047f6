r = a && b || !c;
