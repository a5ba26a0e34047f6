void f() { x += 2; y <<= 1; }
