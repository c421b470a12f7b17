// Keyboard-to-action mapping: arrows and WASD drive a unit-box 2D action.
// Opposing keys cancel; no keys held means a zero action.
const X_POS = new Set(['ArrowRight', 'd', 'D']);
const X_NEG = new Set(['ArrowLeft', 'a', 'A']);
const Y_POS = new Set(['ArrowUp', 'w', 'W']);
const Y_NEG = new Set(['ArrowDown', 's', 'S']);
function axis(pressed, pos, neg) {
    let v = 0;
    for (const k of pressed) {
        if (pos.has(k)) {
            v += 1;
            break;
        }
    }
    for (const k of pressed) {
        if (neg.has(k)) {
            v -= 1;
            break;
        }
    }
    return v;
}
export function keyToAction(pressed) {
    return [axis(pressed, X_POS, X_NEG), axis(pressed, Y_POS, Y_NEG)];
}
export const CONTROL_KEYS = new Set([...X_POS, ...X_NEG, ...Y_POS, ...Y_NEG]);
