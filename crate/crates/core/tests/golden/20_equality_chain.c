e = a == b != c;
