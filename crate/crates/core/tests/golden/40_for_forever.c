void f() { for ( ;; ) break; }
