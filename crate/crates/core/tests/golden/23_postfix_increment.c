void f() { i++; j--; }
