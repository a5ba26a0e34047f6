f(a, int (*)(void), b);
