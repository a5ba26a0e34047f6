void f() { for ( i = 0; i < 10; ++i ) s += i; }
