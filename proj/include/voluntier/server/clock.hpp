#pragma once

namespace voluntier::server {

// Seconds. The server never reads the system time directly.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() const = 0;
};

// Wall-clock seconds since the Unix epoch.
class SystemClock final : public Clock {
public:
    double now() const override;
};

class ManualClock final : public Clock {
public:
    explicit ManualClock(double t = 0.0) : t_(t) {}
    double now() const override { return t_; }
    void set(double t) { t_ = t; }
    void advance(double dt) { t_ += dt; }

private:
    double t_;
};

} // namespace voluntier::server
